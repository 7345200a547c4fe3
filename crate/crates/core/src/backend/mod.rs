//! Completion providers.

mod http;
mod scripted;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use scripted::{Scenario, ScriptedBackend, ScriptedRule};

use crate::protocol::Role;
use crate::tokenize::Tokenizer;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("context overflow: {0}")]
    ContextOverflow(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("provider error (status {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: usize,
        last: Box<BackendError>,
    },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited(_) | BackendError::Transport(_) | BackendError::Malformed(_)
        ) || matches!(self, BackendError::Provider { status, .. } if *status >= 500)
    }

    /// The innermost cause.
    pub fn root(&self) -> &BackendError {
        match self {
            BackendError::Exhausted { last, .. } => last.root(),
            other => other,
        }
    }
}

/// Where in the workflow a call is made. Scripted backends match on it; the
/// HTTP backend ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub role: Role,
    /// Chunk index for Explorer calls.
    pub chunk: Option<usize>,
    /// 1-based pass number.
    pub pass: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub model: String,
    pub site: CallSite,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max output tokens must be positive".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(
                "temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
}

/// Token count under the engine's tokenizer.
pub fn count_tokens(tokenizer: &dyn Tokenizer, text: &str) -> usize {
    tokenizer.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Calls `backend`, retrying retryable failures with exponential backoff.
pub fn complete_with_retry(
    backend: &dyn Backend,
    req: &CompletionRequest,
    policy: RetryPolicy,
) -> Result<String, BackendError> {
    req.validate()?;
    let attempts = policy.attempts.max(1);
    let mut delay = policy.base_delay;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(req) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < attempts => {
                log::warn!("backend call failed (attempt {attempt}/{attempts}): {e}");
                std::thread::sleep(delay);
                delay *= 2;
            }
            Err(e) if attempt > 1 || e.is_retryable() => {
                return Err(BackendError::Exhausted {
                    attempts: attempt,
                    last: Box::new(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Counting semaphore capping in-flight calls.
#[derive(Debug)]
pub struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Self {
            free: Mutex::new(max.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit { limiter: self }
    }
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limiter.free.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}
