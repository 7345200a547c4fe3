//! Centralized shared memory: gathered question/answer pairs and the tracer
//! of unsolved questions.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Normalized question text: lowercased, punctuation stripped, whitespace
/// collapsed. Normalizing a normalized string is a no-op.
pub fn normalize_question(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let stripped: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionKey {
    pub raw: String,
    pub norm: String,
}

impl QuestionKey {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let norm = normalize_question(&raw);
        Self { raw, norm }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub chunk: usize,
    pub pass: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEntry {
    pub question: String,
    pub answers: Vec<Answer>,
}

/// Answers that say nothing ("unknown", "not found", ...). They are kept in
/// the store but do not make a question count as answered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefusalLexicon {
    phrases: BTreeSet<String>,
}

pub const DEFAULT_REFUSALS: &[&str] = &[
    "unknown",
    "not found",
    "not mentioned",
    "no information",
    "none",
    "n/a",
    "cannot be determined",
];

impl Default for RefusalLexicon {
    fn default() -> Self {
        Self::new(DEFAULT_REFUSALS.iter().copied())
    }
}

impl RefusalLexicon {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            phrases: phrases
                .into_iter()
                .map(|p| normalize_question(p.as_ref()))
                .collect(),
        }
    }

    pub fn is_refusal(&self, answer: &str) -> bool {
        let norm = normalize_question(answer);
        norm.is_empty() || self.phrases.contains(&norm)
    }
}

/// Question → ordered answers, keyed by normalized question text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfoStore {
    entries: IndexMap<String, QuestionEntry>,
}

impl InfoStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Registers `question` without answers if it is not present yet.
    pub fn add_question(&mut self, question: &str) {
        let key = QuestionKey::new(question);
        self.entries
            .entry(key.norm)
            .or_insert_with(|| QuestionEntry {
                question: key.raw,
                answers: Vec::new(),
            });
    }

    /// Appends `answer` unless the exact same text is already recorded.
    pub fn add_answer(&mut self, question: &str, answer: Answer) {
        let key = QuestionKey::new(question);
        let entry = self
            .entries
            .entry(key.norm)
            .or_insert_with(|| QuestionEntry {
                question: key.raw,
                answers: Vec::new(),
            });
        if !entry.answers.iter().any(|a| a.text == answer.text) {
            entry.answers.push(answer);
        }
    }

    pub fn get(&self, question: &str) -> Option<&QuestionEntry> {
        self.entries.get(&normalize_question(question))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &QuestionEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_answered(&self, norm: &str, refusals: &RefusalLexicon) -> bool {
        self.entries
            .get(norm)
            .is_some_and(|e| e.answers.iter().any(|a| !refusals.is_refusal(&a.text)))
    }

    /// Normalized keys that carry at least one substantive answer.
    pub fn answered_keys<'a>(
        &'a self,
        refusals: &'a RefusalLexicon,
    ) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .keys()
            .map(String::as_str)
            .filter(move |k| self.is_answered(k, refusals))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub question: String,
    pub origin: usize,
}

/// Unsolved questions and the chunk (1-based) each one was raised in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tracer {
    entries: IndexMap<String, TraceEntry>,
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records `question` as raised in chunk `origin`; an existing record
    /// keeps its origin.
    pub fn insert(&mut self, question: &str, origin: usize) {
        let key = QuestionKey::new(question);
        self.entries.entry(key.norm).or_insert(TraceEntry {
            question: key.raw,
            origin,
        });
    }

    pub fn contains(&self, question: &str) -> bool {
        self.entries.contains_key(&normalize_question(question))
    }

    pub fn origin(&self, question: &str) -> Option<usize> {
        self.entries
            .get(&normalize_question(question))
            .map(|e| e.origin)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TraceEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.entries.retain(|k, _| keep(k));
    }
}

/// Union of both stores; answer lists are appended in order, skipping exact
/// duplicates.
pub fn merge_info(base: &InfoStore, update: &InfoStore) -> InfoStore {
    let mut out = base.clone();
    for (_, entry) in update.iter() {
        out.add_question(&entry.question);
        for a in &entry.answers {
            out.add_answer(&entry.question, a.clone());
        }
    }
    out
}

/// Union of both tracers; on collision the origin already in `base` wins.
pub fn merge_tracer(base: &Tracer, update: &Tracer) -> Tracer {
    let mut out = base.clone();
    for (_, entry) in update.iter() {
        out.insert(&entry.question, entry.origin);
    }
    out
}

/// Drops every tracer question that `solved` answers substantively.
pub fn prune_solved(tracer: &Tracer, solved: &InfoStore, refusals: &RefusalLexicon) -> Tracer {
    let mut out = tracer.clone();
    out.retain(|k| !solved.is_answered(k, refusals));
    out
}

pub fn unsolved_origins(tracer: &Tracer) -> BTreeSet<usize> {
    tracer.iter().map(|(_, e)| e.origin).collect()
}

/// Shared memory owned by one run.
#[derive(Debug, Clone, Default)]
pub struct SharedMemory {
    pub info: InfoStore,
    pub tracer: Tracer,
    pub refusals: RefusalLexicon,
}

impl SharedMemory {
    pub fn new(refusals: RefusalLexicon) -> Self {
        Self {
            info: InfoStore::new(),
            tracer: Tracer::new(),
            refusals,
        }
    }

    /// One exploration step: merge the new questions and findings, then drop
    /// solved questions from the tracer. Newly raised questions that the
    /// store already answers are not tracked.
    pub fn apply_step(&mut self, solved: &InfoStore, raised: &Tracer) {
        self.tracer = merge_tracer(&self.tracer, raised);
        self.info = merge_info(&self.info, solved);
        self.tracer = prune_solved(&self.tracer, solved, &self.refusals);
        let info = &self.info;
        let refusals = &self.refusals;
        self.tracer.retain(|k| !info.is_answered(k, refusals));
    }

    pub fn answered_keys(&self) -> Vec<String> {
        self.info
            .answered_keys(&self.refusals)
            .map(str::to_string)
            .collect()
    }
}
