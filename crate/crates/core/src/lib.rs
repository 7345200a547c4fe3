//! Question-driven multi-agent processing of long inputs.
//!
//! The input is split into overlapping chunks ([`partitioner`]). Explorer
//! agents read the chunks in order and share one memory of questions and
//! answers ([`memory`], [`protocol`]). After each pass a Decider either
//! concludes or asks for a replay that restarts near the origin of the
//! outermost unsolved question and runs in the opposite direction
//! ([`orchestrator`]). [`aov_sim`] simulates the same replay rule on abstract
//! dependency orders, and [`eval`] holds the scoring metrics.

pub mod aov_sim;
pub mod backend;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod memory;
pub mod orchestrator;
pub mod partitioner;
pub mod protocol;
pub mod tokenize;
pub mod trace;

pub use orchestrator::{Engine, EngineConfig, RunError, RunResult};
pub use partitioner::{plan_partition, PartitionConfig, PartitionPlan};
