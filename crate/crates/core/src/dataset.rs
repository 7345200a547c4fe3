//! JSON Lines corpora: one record per line with a context, a query and gold
//! answers. Extra fields are ignored so benchmark files load unmodified.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record {id:?} has an empty context")]
    EmptyContext { line: usize, id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(alias = "_id")]
    pub id: String,
    pub context: String,
    pub input: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<Vec<String>>,
}

/// Gold side of a scoring run; the context is not needed.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct GoldRecord {
    #[serde(alias = "_id")]
    pub id: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default)]
    pub goals: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(alias = "prediction", alias = "pred")]
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concluded: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_count: Option<usize>,
}

/// Parses every nonblank line as `T`.
pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(
    text: &str,
) -> Result<Vec<(usize, T)>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|source| DatasetError::Json {
                    line: i + 1,
                    source,
                })
        })
        .collect()
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, rec) in parse_jsonl::<DatasetRecord>(text)? {
        if !seen.insert(rec.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: rec.id });
        }
        if rec.context.trim().is_empty() {
            return Err(DatasetError::EmptyContext { line, id: rec.id });
        }
        out.push(rec);
    }
    Ok(out)
}
