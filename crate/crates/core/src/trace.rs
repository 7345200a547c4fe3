//! Run traces, one JSON record per line behind a versioned header.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::memory::{InfoStore, Tracer};
use crate::orchestrator::{Direction, RunResult};
use crate::protocol::Action;

pub const TRACE_SCHEMA: &str = "xpanda.trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub id: String,
    pub query: String,
    pub chunk_count: usize,
    pub mrt: usize,
}

/// Snapshot after one Explorer call. `info` and `tracer` hold the shared
/// memory after the merge and prune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreRecord {
    pub pass: usize,
    pub chunk: usize,
    #[serde(with = "ordered_pairs")]
    pub solved: Vec<(String, Vec<String>)>,
    pub new_questions: Vec<String>,
    pub attempts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub info: InfoStore,
    pub tracer: Tracer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecideRecord {
    pub pass: usize,
    /// `None` when no readable verdict came back.
    pub action: Option<Action>,
    pub answer: Option<String>,
    pub forced: bool,
    /// Replay was requested with no unsolved questions left.
    pub overridden: bool,
    pub attempts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub replay: usize,
    pub start: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Explore(ExploreRecord),
    Decide(DecideRecord),
    Replay(ReplayRecord),
}

mod ordered_pairs {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[(String, Vec<String>)], s: S) -> Result<S::Ok, S::Error> {
        let map: IndexMap<&str, &Vec<String>> = v.iter().map(|(k, a)| (k.as_str(), a)).collect();
        map.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<(String, Vec<String>)>, D::Error> {
        let map = IndexMap::<String, Vec<String>>::deserialize(d)?;
        Ok(map.into_iter().collect())
    }
}

pub fn to_jsonl(id: &str, query: &str, mrt: usize, result: &RunResult) -> String {
    let header = TraceHeader {
        schema: TRACE_SCHEMA.into(),
        version: TRACE_VERSION,
        id: id.into(),
        query: query.into(),
        chunk_count: result.chunk_count,
        mrt,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in &result.trace {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("unsupported trace schema {schema} v{version}")]
    Schema { schema: String, version: u32 },
}

pub fn from_jsonl(text: &str) -> Result<(TraceHeader, Vec<TraceRecord>), TraceReadError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(TraceReadError::Empty)?;
    let header: TraceHeader =
        serde_json::from_str(first).map_err(|source| TraceReadError::Json { line: 1, source })?;
    if header.schema != TRACE_SCHEMA || header.version != TRACE_VERSION {
        return Err(TraceReadError::Schema {
            schema: header.schema,
            version: header.version,
        });
    }
    let records = lines
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| TraceReadError::Json {
                line: i + 1,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok((header, records))
}

/// Answered question keys after each Explorer step, for progress scoring.
pub fn answered_per_step(
    records: &[TraceRecord],
    refusals: &crate::memory::RefusalLexicon,
) -> Vec<Vec<String>> {
    records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Explore(e) => {
                Some(e.info.answered_keys(refusals).map(String::from).collect())
            }
            _ => None,
        })
        .collect()
}
