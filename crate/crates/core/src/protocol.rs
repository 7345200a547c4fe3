//! Prompt rendering for the Explorer and Decider roles, and parsing of their
//! structured replies.
//!
//! Agents answer with free text that ends in a fenced JSON block. The last
//! fenced block that holds valid JSON is the reply; anything around it is
//! ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::memory::{InfoStore, Tracer};
use crate::partitioner::Chunk;
use crate::tokenize::Tokenizer;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("prompt needs {tokens} tokens but the window holds {window} ({overflow} over)")]
    Oversize {
        tokens: usize,
        window: usize,
        overflow: usize,
    },
    #[error("template: {0}")]
    Template(String),
    #[error("no well-formed structured block: {0}")]
    ParseFailure(String),
    #[error("structured block has the wrong shape: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Explorer,
    Decider,
}

impl Role {
    fn slots(self) -> &'static [&'static str] {
        match self {
            Role::Explorer => &["query", "open_questions", "pairs", "chunk"],
            Role::Decider => &["query", "pairs"],
        }
    }
}

// Default instructions written for this engine; they are not taken from any
// published prompt set.
const DEFAULT_EXPLORER: &str = "\
You are an Explorer reading one part of a long document. Work toward the user \
query together with the other Explorers through the shared notes below.
1. Break the query and every open question into smaller sub-questions when that helps.
2. Answer any question you can from the document part, quoting facts exactly.
3. When the new information raises further questions about other entities or \
events, propose them as new questions so later readers can resolve them.

## Query
{query}

## Open questions
{open_questions}

## Gathered information
{pairs}

## Document part
{chunk}
";

const DEFAULT_DECIDER: &str = "\
You are the Decider. Judge whether the gathered information is sufficient to \
answer the query. If it is, conclude with the final answer. If key facts are \
still missing, ask for another reading pass.

## Query
{query}

## Gathered information
{pairs}
";

const EXPLORER_CONTRACT: &str = "\
## Output format
End your reply with exactly one fenced JSON block of this shape:
```json
{\"solved\": {\"<question>\": [\"<answer>\"]}, \"new_questions\": [\"<question>\"]}
```
";

const DECIDER_CONTRACT: &str = "\
## Output format
End your reply with exactly one fenced JSON block, either
```json
{\"action\": \"Replay\"}
```
or
```json
{\"action\": \"Conclude\", \"answer\": \"<final answer>\"}
```
";

pub const FORCED_CONCLUDE_MARKER: &str = "No further reading passes are possible.";

const FORCED_CONTRACT: &str = "\
## Output format
No further reading passes are possible. You must conclude now with your best \
answer. End your reply with exactly one fenced JSON block:
```json
{\"action\": \"Conclude\", \"answer\": \"<final answer>\"}
```
";

pub const FORMAT_REMINDER: &str = "\n\nReminder: your previous reply could not be read. \
Finish with exactly one fenced JSON block in the format described above.";

const NO_OPEN_QUESTIONS: &str = "(no open questions)";
const NO_INFORMATION: &str = "(no gathered information)";

/// An instruction template with named `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role: Role,
    pub text: String,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

impl PromptTemplate {
    pub fn new(role: Role, text: impl Into<String>) -> Result<Self, ProtocolError> {
        let t = Self {
            role,
            text: text.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn default_for(role: Role) -> Self {
        let text = match role {
            Role::Explorer => DEFAULT_EXPLORER,
            Role::Decider => DEFAULT_DECIDER,
        };
        Self {
            role,
            text: text.to_string(),
        }
    }

    pub fn from_file(role: Role, path: &Path) -> Result<Self, ProtocolError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProtocolError::Template(format!("{}: {e}", path.display())))?;
        Self::new(role, text)
    }

    /// Every required slot must appear, and no unknown slot may.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let slots = self.role.slots();
        for cap in placeholder_re().captures_iter(&self.text) {
            let name = &cap[1];
            if !slots.contains(&name) {
                return Err(ProtocolError::Template(format!(
                    "unknown placeholder {{{name}}} in {:?} template",
                    self.role
                )));
            }
        }
        for slot in slots {
            if !self.text.contains(&format!("{{{slot}}}")) {
                return Err(ProtocolError::Template(format!(
                    "{:?} template is missing {{{slot}}}",
                    self.role
                )));
            }
        }
        Ok(())
    }

    fn fill(&self, values: &[(&str, &str)]) -> Result<String, ProtocolError> {
        self.validate()?;
        // Single left-to-right pass so slot values are never re-expanded.
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for cap in placeholder_re().captures_iter(&self.text) {
            let whole = cap.get(0).unwrap();
            let value = values
                .iter()
                .find(|(k, _)| *k == &cap[1])
                .map(|(_, v)| *v)
                .ok_or_else(|| ProtocolError::Template(format!("no value for {{{}}}", &cap[1])))?;
            out.push_str(&self.text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// Token budget of the backend's context window.
#[derive(Clone, Copy)]
pub struct PromptBudget<'a> {
    pub tokenizer: &'a dyn Tokenizer,
    pub window: usize,
}

impl PromptBudget<'_> {
    fn check(&self, prompt: &str) -> Result<(), ProtocolError> {
        let tokens = self.tokenizer.count(prompt);
        if tokens > self.window {
            return Err(ProtocolError::Oversize {
                tokens,
                window: self.window,
                overflow: tokens - self.window,
            });
        }
        Ok(())
    }
}

pub fn format_open_questions(tracer: &Tracer) -> String {
    if tracer.is_empty() {
        return NO_OPEN_QUESTIONS.to_string();
    }
    let mut s = String::new();
    for (_, e) in tracer.iter() {
        let _ = writeln!(s, "- {} (raised in part {})", e.question, e.origin);
    }
    s.pop();
    s
}

pub fn format_pairs(info: &InfoStore) -> String {
    if info.is_empty() {
        return NO_INFORMATION.to_string();
    }
    let mut s = String::new();
    for (_, e) in info.iter() {
        let _ = writeln!(s, "- Q: {}", e.question);
        if e.answers.is_empty() {
            let _ = writeln!(s, "  A: (no answer yet)");
        }
        for a in &e.answers {
            let _ = writeln!(s, "  A: {}", a.text);
        }
    }
    s.pop();
    s
}

pub fn render_explorer_prompt(
    template: &PromptTemplate,
    query: &str,
    tracer: &Tracer,
    info: &InfoStore,
    chunk: &Chunk,
    budget: PromptBudget<'_>,
) -> Result<String, ProtocolError> {
    if chunk.text.is_empty() {
        return Err(ProtocolError::Template("chunk is empty".into()));
    }
    let open = format_open_questions(tracer);
    let pairs = format_pairs(info);
    let mut prompt = template.fill(&[
        ("query", query),
        ("open_questions", &open),
        ("pairs", &pairs),
        ("chunk", &chunk.text),
    ])?;
    prompt.push('\n');
    prompt.push_str(EXPLORER_CONTRACT);
    budget.check(&prompt)?;
    Ok(prompt)
}

/// Renders the Decider prompt. With `forced` set the Decider is told that it
/// must conclude.
pub fn render_decider_prompt(
    template: &PromptTemplate,
    query: &str,
    info: &InfoStore,
    forced: bool,
    budget: PromptBudget<'_>,
) -> Result<String, ProtocolError> {
    let pairs = format_pairs(info);
    let mut prompt = template.fill(&[("query", query), ("pairs", &pairs)])?;
    prompt.push('\n');
    prompt.push_str(if forced {
        FORCED_CONTRACT
    } else {
        DECIDER_CONTRACT
    });
    budget.check(&prompt)?;
    Ok(prompt)
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```").unwrap())
}

/// The JSON value of the last fenced block that parses.
fn last_json_block(text: &str) -> Result<Value, ProtocolError> {
    let blocks: Vec<&str> = fence_re()
        .captures_iter(text)
        .map(|c| c.get(1).unwrap().as_str())
        .collect();
    if blocks.is_empty() {
        return Err(ProtocolError::ParseFailure("no fenced block".into()));
    }
    blocks
        .iter()
        .rev()
        .find_map(|b| serde_json::from_str::<Value>(b).ok())
        .ok_or_else(|| ProtocolError::ParseFailure("no fenced block holds valid JSON".into()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplorerOutput {
    /// Question → answers, in reply order.
    pub solved: Vec<(String, Vec<String>)>,
    pub new_questions: Vec<String>,
}

fn string_list(v: &Value, what: &str) -> Result<Vec<String>, ProtocolError> {
    match v {
        Value::Null => Ok(Vec::new()),
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => Ok(s.clone()),
                other => Err(ProtocolError::Schema(format!(
                    "{what} must hold strings, found {other}"
                ))),
            })
            .collect(),
        other => Err(ProtocolError::Schema(format!(
            "{what} must be a list of strings, found {other}"
        ))),
    }
}

pub fn parse_explorer_output(text: &str) -> Result<ExplorerOutput, ProtocolError> {
    let value = last_json_block(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| ProtocolError::Schema("top level must be an object".into()))?;
    if !obj.contains_key("solved") && !obj.contains_key("new_questions") {
        return Err(ProtocolError::Schema(
            "expected \"solved\" and/or \"new_questions\"".into(),
        ));
    }
    let solved = match obj.get("solved") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Object(map)) => map
            .iter()
            .map(|(q, a)| Ok((q.clone(), string_list(a, "answers")?)))
            .collect::<Result<_, ProtocolError>>()?,
        Some(other) => {
            return Err(ProtocolError::Schema(format!(
                "\"solved\" must be an object, found {other}"
            )))
        }
    };
    let new_questions = match obj.get("new_questions") {
        None => Vec::new(),
        Some(v) => string_list(v, "new_questions")?,
    };
    Ok(ExplorerOutput {
        solved,
        new_questions,
    })
}

/// Serializes to the block format the parser reads. Backticks are escaped so
/// text fields can never close the fence early.
pub fn serialize_explorer_output(out: &ExplorerOutput) -> String {
    let mut solved = Map::new();
    for (q, answers) in &out.solved {
        solved.insert(q.clone(), Value::from(answers.clone()));
    }
    let mut obj = Map::new();
    obj.insert("solved".into(), Value::Object(solved));
    obj.insert(
        "new_questions".into(),
        Value::from(out.new_questions.clone()),
    );
    fenced(&Value::Object(obj))
}

pub(crate) fn fenced(v: &Value) -> String {
    let body = serde_json::to_string(v)
        .expect("json values always serialize")
        .replace('`', "\\u0060");
    format!("```json\n{body}\n```")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Replay,
    Conclude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeciderVerdict {
    pub action: Action,
    pub answer: Option<String>,
}

pub fn parse_decider_output(text: &str) -> Result<DeciderVerdict, ProtocolError> {
    let value = last_json_block(text)?;
    let action = value
        .get("action")
        .and_then(Value::as_str)
        .map(|s| s.trim().to_ascii_lowercase());
    match action.as_deref() {
        Some("replay") => Ok(DeciderVerdict {
            action: Action::Replay,
            answer: None,
        }),
        Some("conclude") => {
            let answer = match value.get("answer") {
                Some(Value::String(s)) => s.trim().to_string(),
                Some(v @ (Value::Number(_) | Value::Bool(_))) => v.to_string(),
                _ => String::new(),
            };
            if answer.is_empty() {
                return Err(ProtocolError::Schema("Conclude without an answer".into()));
            }
            Ok(DeciderVerdict {
                action: Action::Conclude,
                answer: Some(answer),
            })
        }
        _ => Err(ProtocolError::ParseFailure(
            "block names neither Replay nor Conclude".into(),
        )),
    }
}

pub fn serialize_verdict(v: &DeciderVerdict) -> String {
    let mut obj = Map::new();
    let action = match v.action {
        Action::Replay => "Replay",
        Action::Conclude => "Conclude",
    };
    obj.insert("action".into(), Value::from(action));
    if let Some(a) = &v.answer {
        obj.insert("answer".into(), Value::from(a.clone()));
    }
    fenced(&Value::Object(obj))
}
