//! The exploration loop: sequential Explorer passes over the chunks, a
//! Decider verdict after each pass, and selective replay in alternating
//! directions until the Decider concludes or the replay budget runs out.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    complete_with_retry, Backend, BackendError, CallSite, CompletionRequest, RetryPolicy,
};
use crate::memory::{normalize_question, Answer, InfoStore, RefusalLexicon, SharedMemory, Tracer};
use crate::partitioner::{split, Chunk, PartitionConfig};
use crate::protocol::{
    parse_decider_output, parse_explorer_output, render_decider_prompt, render_explorer_prompt,
    Action, ExplorerOutput, PromptBudget, PromptTemplate, ProtocolError, Role, FORMAT_REMINDER,
};
use crate::tokenize::{TokenizedText, Tokenizer};
use crate::trace::{DecideRecord, ExploreRecord, ReplayRecord, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Where a replay restarts relative to the origin chunk of the outermost
/// unsolved question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReplayOffset {
    /// Skip the origin chunk itself: it could not answer its own question.
    #[default]
    Exclusive,
    /// Restart at the origin chunk.
    Inclusive,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no unsolved questions to replay for")]
pub struct NoUnsolved;

/// Chunk indices visited from `start` in `direction` up to the boundary.
pub fn traversal(start: usize, direction: Direction, chunk_count: usize) -> Vec<usize> {
    debug_assert!((1..=chunk_count).contains(&start));
    match direction {
        Direction::Forward => (start..=chunk_count).collect(),
        Direction::Backward => (1..=start).rev().collect(),
    }
}

/// Restart point after a pass in `completed` direction, given the origin
/// chunks of the unsolved questions. After a forward pass the replay runs
/// backward from just before the last origin; after a backward pass it runs
/// forward from just after the first origin.
pub fn restart_point<I>(
    origins: I,
    completed: Direction,
    chunk_count: usize,
    offset: ReplayOffset,
) -> Option<usize>
where
    I: IntoIterator<Item = usize>,
{
    let step = match offset {
        ReplayOffset::Exclusive => 1,
        ReplayOffset::Inclusive => 0,
    };
    let mut origins = origins.into_iter().peekable();
    origins.peek()?;
    let o = match completed {
        Direction::Forward => origins.max()?.saturating_sub(step),
        Direction::Backward => origins.min()? + step,
    };
    Some(o.clamp(1, chunk_count.max(1)))
}

pub fn next_start(
    tracer: &Tracer,
    completed: Direction,
    chunk_count: usize,
    offset: ReplayOffset,
) -> Result<usize, NoUnsolved> {
    restart_point(
        tracer.iter().map(|(_, e)| e.origin),
        completed,
        chunk_count,
        offset,
    )
    .ok_or(NoUnsolved)
}

/// Loop position: start chunk, direction, replays used so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunState {
    pub start: usize,
    pub direction: Direction,
    pub replay_times: usize,
    pub mrt: usize,
    pub chunk_count: usize,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub partition: PartitionConfig,
    /// Maximum replays; `None` means `chunk_count - 1`.
    pub mrt: Option<usize>,
    pub replay_offset: ReplayOffset,
    /// Re-asks after an unreadable reply.
    pub parse_retries: usize,
    pub retry: RetryPolicy,
    pub model: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub context_window: usize,
    pub refusals: RefusalLexicon,
    pub explorer_template: PromptTemplate,
    pub decider_template: PromptTemplate,
    pub record_timings: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            partition: PartitionConfig::default(),
            mrt: None,
            replay_offset: ReplayOffset::Exclusive,
            parse_retries: 2,
            retry: RetryPolicy::default(),
            model: "default".into(),
            max_output_tokens: 1024,
            temperature: 0.0,
            context_window: 131_072,
            refusals: RefusalLexicon::default(),
            explorer_template: PromptTemplate::default_for(Role::Explorer),
            decider_template: PromptTemplate::default_for(Role::Decider),
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub answer: String,
    /// False when the answer was forced after the replay budget ran out.
    pub concluded: bool,
    pub replay_count: usize,
    pub passes: usize,
    pub chunk_count: usize,
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    pub fn explorer_steps(&self) -> usize {
        self.trace
            .iter()
            .filter(|r| matches!(r, TraceRecord::Explore(_)))
            .count()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunErrorKind {
    #[error("input has no tokens")]
    EmptyInput,
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{kind}")]
pub struct RunError {
    pub kind: RunErrorKind,
    /// Trace up to the failure.
    pub partial: Vec<TraceRecord>,
}

const EXPLORER_SYSTEM: &str = "You are an Explorer agent in a team reading a long document.";
const DECIDER_SYSTEM: &str = "You are the Decider agent of a team reading a long document.";

pub struct Engine<'a> {
    cfg: &'a EngineConfig,
    backend: &'a dyn Backend,
    tokenizer: &'a dyn Tokenizer,
}

struct Run<'e, 'a> {
    engine: &'e Engine<'a>,
    query: &'e str,
    memory: SharedMemory,
    trace: Vec<TraceRecord>,
}

impl<'a> Engine<'a> {
    pub fn new(
        cfg: &'a EngineConfig,
        backend: &'a dyn Backend,
        tokenizer: &'a dyn Tokenizer,
    ) -> Self {
        Self {
            cfg,
            backend,
            tokenizer,
        }
    }

    pub fn chunks(&self, context: &str) -> Vec<Chunk> {
        split(
            &TokenizedText::new(context, self.tokenizer),
            &self.cfg.partition,
        )
    }

    pub fn run(&self, query: &str, context: &str) -> Result<RunResult, RunError> {
        let chunks = self.chunks(context);
        self.run_chunks(query, &chunks)
    }

    pub fn run_chunks(&self, query: &str, chunks: &[Chunk]) -> Result<RunResult, RunError> {
        if chunks.is_empty() {
            return Err(RunError {
                kind: RunErrorKind::EmptyInput,
                partial: Vec::new(),
            });
        }
        let mut run = Run {
            engine: self,
            query,
            memory: SharedMemory::new(self.cfg.refusals.clone()),
            trace: Vec::new(),
        };
        run.execute(chunks).map_err(|kind| RunError {
            kind,
            partial: std::mem::take(&mut run.trace),
        })
    }

    fn budget(&self) -> PromptBudget<'a> {
        PromptBudget {
            tokenizer: self.tokenizer,
            window: self.cfg.context_window,
        }
    }

    fn request(&self, system: &str, user: String, site: CallSite) -> CompletionRequest {
        CompletionRequest {
            system: system.to_string(),
            user,
            max_output_tokens: self.cfg.max_output_tokens,
            temperature: self.cfg.temperature,
            model: self.cfg.model.clone(),
            site,
        }
    }
}

/// Result of asking an agent, with re-asks on unreadable replies.
struct Asked<T> {
    value: Option<T>,
    attempts: usize,
    error: Option<String>,
    elapsed_ms: Option<u64>,
}

impl Run<'_, '_> {
    fn execute(&mut self, chunks: &[Chunk]) -> Result<RunResult, RunErrorKind> {
        let cfg = self.engine.cfg;
        let l = chunks.len();
        let mut state = RunState {
            start: 1,
            direction: Direction::Forward,
            replay_times: 0,
            mrt: cfg.mrt.unwrap_or(l - 1),
            chunk_count: l,
        };
        let mut pass = 0;
        loop {
            pass += 1;
            for i in traversal(state.start, state.direction, l) {
                self.explore(&chunks[i - 1], pass)?;
            }
            let asked = self.decide(pass, false)?;
            let verdict = asked.value.clone();
            let wants_replay = !matches!(&verdict, Some(v) if v.action == Action::Conclude);
            let overridden = wants_replay && self.memory.tracer.is_empty();
            self.trace.push(TraceRecord::Decide(DecideRecord {
                pass,
                action: verdict.as_ref().map(|v| v.action),
                answer: verdict.as_ref().and_then(|v| v.answer.clone()),
                forced: false,
                overridden,
                attempts: asked.attempts,
                parse_error: asked.error,
                elapsed_ms: asked.elapsed_ms,
            }));
            if !wants_replay {
                let answer = verdict.and_then(|v| v.answer).unwrap_or_default();
                return Ok(self.finish(answer, true, state.replay_times, pass, l));
            }
            if overridden {
                // Nothing left to look for; ask for the answer directly.
                let (answer, concluded) = self.force_conclusion(pass)?;
                return Ok(self.finish(answer, concluded, state.replay_times, pass, l));
            }
            if state.replay_times >= state.mrt {
                break;
            }
            let start = next_start(&self.memory.tracer, state.direction, l, cfg.replay_offset)
                .expect("tracer is nonempty");
            state.start = start;
            state.direction = state.direction.flip();
            state.replay_times += 1;
            self.trace.push(TraceRecord::Replay(ReplayRecord {
                replay: state.replay_times,
                start,
                direction: state.direction,
            }));
        }
        let (answer, _) = self.force_conclusion(pass)?;
        Ok(self.finish(answer, false, state.replay_times, pass, l))
    }

    fn finish(
        &mut self,
        answer: String,
        concluded: bool,
        replay_count: usize,
        passes: usize,
        chunk_count: usize,
    ) -> RunResult {
        RunResult {
            answer,
            concluded,
            replay_count,
            passes,
            chunk_count,
            trace: std::mem::take(&mut self.trace),
        }
    }

    fn ask<T>(
        &self,
        prompt: String,
        system: &str,
        site: CallSite,
        parse: impl Fn(&str) -> Result<T, ProtocolError>,
    ) -> Result<Asked<T>, RunErrorKind> {
        let engine = self.engine;
        let started = Instant::now();
        let mut error = None;
        let mut attempts = 0;
        let mut value = None;
        for attempt in 0..=engine.cfg.parse_retries {
            attempts += 1;
            let user = if attempt == 0 {
                prompt.clone()
            } else {
                format!("{prompt}{FORMAT_REMINDER}")
            };
            let req = engine.request(system, user, site);
            let text = complete_with_retry(engine.backend, &req, engine.cfg.retry)?;
            match parse(&text) {
                Ok(v) => {
                    value = Some(v);
                    error = None;
                    break;
                }
                Err(e) => error = Some(e.to_string()),
            }
        }
        Ok(Asked {
            value,
            attempts,
            error,
            elapsed_ms: engine
                .cfg
                .record_timings
                .then(|| started.elapsed().as_millis() as u64),
        })
    }

    fn explore(&mut self, chunk: &Chunk, pass: usize) -> Result<(), RunErrorKind> {
        let engine = self.engine;
        let prompt = render_explorer_prompt(
            &engine.cfg.explorer_template,
            self.query,
            &self.memory.tracer,
            &self.memory.info,
            chunk,
            engine.budget(),
        )?;
        let site = CallSite {
            role: Role::Explorer,
            chunk: Some(chunk.index),
            pass,
        };
        let asked = self.ask(prompt, EXPLORER_SYSTEM, site, parse_explorer_output)?;
        let output = asked.value.unwrap_or_default();
        let (solved, raised) = to_memory(&output, chunk.index, pass);
        self.memory.apply_step(&solved, &raised);
        self.trace.push(TraceRecord::Explore(ExploreRecord {
            pass,
            chunk: chunk.index,
            solved: output.solved,
            new_questions: output.new_questions,
            attempts: asked.attempts,
            parse_error: asked.error,
            info: self.memory.info.clone(),
            tracer: self.memory.tracer.clone(),
            elapsed_ms: asked.elapsed_ms,
        }));
        Ok(())
    }

    fn decide(
        &self,
        pass: usize,
        forced: bool,
    ) -> Result<Asked<crate::protocol::DeciderVerdict>, RunErrorKind> {
        let engine = self.engine;
        let prompt = render_decider_prompt(
            &engine.cfg.decider_template,
            self.query,
            &self.memory.info,
            forced,
            engine.budget(),
        )?;
        let site = CallSite {
            role: Role::Decider,
            chunk: None,
            pass,
        };
        self.ask(prompt, DECIDER_SYSTEM, site, move |text| {
            let v = parse_decider_output(text)?;
            if forced && v.action != Action::Conclude {
                return Err(ProtocolError::ParseFailure(
                    "a concluding answer was required".into(),
                ));
            }
            Ok(v)
        })
    }

    /// Final Decider call that may only conclude. Returns the answer and
    /// whether a readable conclusion came back.
    fn force_conclusion(&mut self, pass: usize) -> Result<(String, bool), RunErrorKind> {
        let asked = self.decide(pass, true)?;
        let answer = asked.value.as_ref().and_then(|v| v.answer.clone());
        self.trace.push(TraceRecord::Decide(DecideRecord {
            pass,
            action: asked.value.as_ref().map(|v| v.action),
            answer: answer.clone(),
            forced: true,
            overridden: false,
            attempts: asked.attempts,
            parse_error: asked.error,
            elapsed_ms: asked.elapsed_ms,
        }));
        let ok = answer.is_some();
        Ok((answer.unwrap_or_default(), ok))
    }
}

fn to_memory(output: &ExplorerOutput, chunk: usize, pass: usize) -> (InfoStore, Tracer) {
    let mut solved = InfoStore::new();
    for (q, answers) in &output.solved {
        if normalize_question(q).is_empty() {
            continue;
        }
        solved.add_question(q);
        for a in answers {
            solved.add_answer(
                q,
                Answer {
                    text: a.clone(),
                    chunk,
                    pass,
                },
            );
        }
    }
    let mut raised = Tracer::new();
    for q in &output.new_questions {
        if !normalize_question(q).is_empty() {
            raised.insert(q, chunk);
        }
    }
    (solved, raised)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracer(pairs: &[(&str, usize)]) -> Tracer {
        let mut t = Tracer::new();
        for (q, o) in pairs {
            t.insert(q, *o);
        }
        t
    }

    #[test]
    fn next_start_examples() {
        let ex = ReplayOffset::Exclusive;
        assert_eq!(
            next_start(&tracer(&[("qa", 3), ("qb", 5)]), Direction::Forward, 6, ex),
            Ok(4)
        );
        assert_eq!(
            next_start(&tracer(&[("qa", 1)]), Direction::Forward, 6, ex),
            Ok(1)
        );
        assert_eq!(
            next_start(&tracer(&[("qa", 2), ("qb", 4)]), Direction::Backward, 6, ex),
            Ok(3)
        );
        assert_eq!(
            next_start(&Tracer::new(), Direction::Forward, 6, ex),
            Err(NoUnsolved)
        );
        assert_eq!(
            next_start(&tracer(&[("qa", 6)]), Direction::Backward, 6, ex),
            Ok(6)
        );
    }

    #[test]
    fn inclusive_offset() {
        let inc = ReplayOffset::Inclusive;
        assert_eq!(
            next_start(&tracer(&[("qa", 3), ("qb", 5)]), Direction::Forward, 6, inc),
            Ok(5)
        );
        assert_eq!(
            next_start(
                &tracer(&[("qa", 2), ("qb", 4)]),
                Direction::Backward,
                6,
                inc
            ),
            Ok(2)
        );
    }

    #[test]
    fn traversal_examples() {
        assert_eq!(traversal(4, Direction::Backward, 6), vec![4, 3, 2, 1]);
        assert_eq!(traversal(2, Direction::Forward, 4), vec![2, 3, 4]);
        assert_eq!(traversal(1, Direction::Backward, 5), vec![1]);
    }

    #[test]
    fn empty_questions_are_dropped() {
        let out = ExplorerOutput {
            solved: vec![("?!".into(), vec!["x".into()])],
            new_questions: vec!["  ".into(), "real?".into()],
        };
        let (solved, raised) = to_memory(&out, 2, 1);
        assert!(solved.is_empty());
        assert_eq!(raised.origin("real"), Some(2));
        assert_eq!(raised.len(), 1);
    }
}
