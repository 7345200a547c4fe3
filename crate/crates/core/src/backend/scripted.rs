use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, CompletionRequest};
use crate::protocol::{fenced, Role};

/// A canned reply. A JSON string is returned verbatim; any other JSON value
/// is returned as a fenced block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Text(String),
    Block(Value),
}

impl Reply {
    fn render(&self) -> String {
        match self {
            Reply::Text(t) => t.clone(),
            Reply::Block(v) => fenced(v),
        }
    }
}

/// Matches a call by role, chunk, pass and/or prompt substring. Unset fields
/// match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub reply: Reply,
}

impl ScriptedRule {
    fn matches(&self, req: &CompletionRequest) -> bool {
        self.role.is_none_or(|r| r == req.site.role)
            && self.chunk.is_none_or(|c| req.site.chunk == Some(c))
            && self.pass.is_none_or(|p| p == req.site.pass)
            && self
                .contains
                .as_deref()
                .is_none_or(|s| req.user.contains(s) || req.system.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub rules: Vec<ScriptedRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_explorer: Option<Reply>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_decider: Option<Reply>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Deterministic rule-driven backend: the first matching rule answers.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    scenario: Scenario,
}

impl ScriptedBackend {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        if let Some(rule) = self.scenario.rules.iter().find(|r| r.matches(req)) {
            return Ok(rule.reply.render());
        }
        let fallback = match req.site.role {
            Role::Explorer => self
                .scenario
                .default_explorer
                .clone()
                .unwrap_or_else(|| Reply::Block(json!({"solved": {}, "new_questions": []}))),
            Role::Decider => self.scenario.default_decider.clone().unwrap_or_else(|| {
                Reply::Block(json!({"action": "Conclude", "answer": "unknown"}))
            }),
        };
        Ok(fallback.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::CallSite;
    use crate::protocol::parse_explorer_output;

    fn req(role: Role, chunk: Option<usize>, pass: usize, user: &str) -> CompletionRequest {
        CompletionRequest {
            system: String::new(),
            user: user.into(),
            max_output_tokens: 8,
            temperature: 0.0,
            model: "scripted".into(),
            site: CallSite { role, chunk, pass },
        }
    }

    #[test]
    fn rule_lookup_and_default() {
        let scenario = Scenario::from_json(
            r#"{"rules": [
                {"role": "explorer", "chunk": 2, "pass": 1, "reply": "canned"},
                {"role": "explorer", "contains": "needle", "reply": {"new_questions": ["q"]}}
            ]}"#,
        )
        .unwrap();
        let b = ScriptedBackend::new(scenario);
        assert_eq!(
            b.complete(&req(Role::Explorer, Some(2), 1, "x")).unwrap(),
            "canned"
        );
        let out = b
            .complete(&req(Role::Explorer, Some(2), 2, "a needle"))
            .unwrap();
        assert_eq!(
            parse_explorer_output(&out).unwrap().new_questions,
            vec!["q"]
        );
        let out = b.complete(&req(Role::Explorer, Some(3), 1, "x")).unwrap();
        let parsed = parse_explorer_output(&out).unwrap();
        assert!(parsed.solved.is_empty() && parsed.new_questions.is_empty());
    }

    #[test]
    fn first_match_wins() {
        let scenario = Scenario::from_json(
            r#"{"rules": [
                {"role": "decider", "reply": "first"},
                {"role": "decider", "pass": 1, "reply": "second"}
            ]}"#,
        )
        .unwrap();
        let b = ScriptedBackend::new(scenario);
        assert_eq!(
            b.complete(&req(Role::Decider, None, 1, "")).unwrap(),
            "first"
        );
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(Scenario::from_json(r#"{"rules": [{"chunck": 1, "reply": "x"}]}"#).is_err());
    }
}
