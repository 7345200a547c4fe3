//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, Limiter};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_concurrency: usize,
}

#[derive(Debug, Serialize)]
pub(crate) struct WireRequest<'a> {
    pub model: &'a str,
    pub messages: Vec<WireMessage<'a>>,
    pub max_tokens: u32,
    pub temperature: f32,
    pub stream: bool,
}

#[derive(Debug, Serialize)]
pub(crate) struct WireMessage<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Debug, Deserialize)]
struct WireContent {
    content: Option<String>,
}

impl<'a> WireRequest<'a> {
    pub(crate) fn from_request(req: &'a CompletionRequest) -> Self {
        let mut messages = Vec::with_capacity(2);
        if !req.system.is_empty() {
            messages.push(WireMessage {
                role: "system",
                content: &req.system,
            });
        }
        messages.push(WireMessage {
            role: "user",
            content: &req.user,
        });
        Self {
            model: &req.model,
            messages,
            max_tokens: req.max_output_tokens,
            temperature: req.temperature,
            stream: false,
        }
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    limiter: Limiter,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        let endpoint = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        Self {
            agent,
            endpoint,
            api_key: cfg.api_key,
            limiter: Limiter::new(cfg.max_concurrency),
        }
    }
}

fn classify(status: u16, body: String) -> BackendError {
    let lower = body.to_lowercase();
    if status == 429 {
        BackendError::RateLimited(body)
    } else if status == 400
        && (lower.contains("context length")
            || lower.contains("context_length")
            || lower.contains("too many tokens"))
    {
        BackendError::ContextOverflow(body)
    } else {
        BackendError::Provider { status, body }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let _permit = self.limiter.acquire();
        let mut call = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match call.send_json(WireRequest::from_request(req)) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(classify(status, r.into_string().unwrap_or_default()))
            }
            Err(ureq::Error::Transport(t)) => return Err(BackendError::Transport(t.to_string())),
        };
        let body: WireResponse = resp
            .into_json()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("response has no message content".into()))
    }
}
