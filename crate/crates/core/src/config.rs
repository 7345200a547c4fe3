//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, HttpBackend, HttpConfig, RetryPolicy, Scenario, ScriptedBackend};
use crate::memory::{RefusalLexicon, DEFAULT_REFUSALS};
use crate::orchestrator::{EngineConfig, ReplayOffset};
use crate::partitioner::PartitionConfig;
use crate::protocol::{PromptTemplate, Role};
use crate::tokenize::{build_tokenizer, Tokenizer, TokenizerKind};

pub const API_KEY_ENV: &str = "XPANDA_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerSection {
    pub kind: TokenizerKind,
    pub bytes_per_token: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self {
            kind: TokenizerKind::Whitespace,
            bytes_per_token: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub timeout_s: u64,
    pub max_concurrency: usize,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub context_window: usize,
    pub retries: usize,
    pub backoff_ms: u64,
    /// Rule file for the scripted backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            timeout_s: 120,
            max_concurrency: 4,
            max_output_tokens: 1024,
            temperature: 0.0,
            context_window: 131_072,
            retries: 3,
            backoff_ms: 500,
            scenario: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrt: Option<usize>,
    pub replay_offset: ReplayOffset,
    pub parse_retries: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mrt: None,
            replay_offset: ReplayOffset::Exclusive,
            parse_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PromptsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explorer: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decider: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorySection {
    pub refusals: Vec<String>,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            refusals: DEFAULT_REFUSALS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub chunk: PartitionConfig,
    pub tokenizer: TokenizerSection,
    pub backend: BackendSection,
    pub run: RunSection,
    pub prompts: PromptsSection,
    pub memory: MemorySection,
    pub trace: TraceSection,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.chunk
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let b = &self.backend;
        if b.max_output_tokens == 0 {
            return Err(ConfigError::Invalid(
                "backend.max_output_tokens must be positive".into(),
            ));
        }
        if b.temperature.is_nan() || b.temperature < 0.0 {
            return Err(ConfigError::Invalid(
                "backend.temperature must be non-negative".into(),
            ));
        }
        if b.max_concurrency == 0 {
            return Err(ConfigError::Invalid(
                "backend.max_concurrency must be at least 1".into(),
            ));
        }
        if b.timeout_s == 0 {
            return Err(ConfigError::Invalid(
                "backend.timeout_s must be positive".into(),
            ));
        }
        if b.context_window == 0 {
            return Err(ConfigError::Invalid(
                "backend.context_window must be positive".into(),
            ));
        }
        if self.tokenizer.bytes_per_token == 0 {
            return Err(ConfigError::Invalid(
                "tokenizer.bytes_per_token must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn tokenizer(&self) -> Box<dyn Tokenizer> {
        build_tokenizer(self.tokenizer.kind, self.tokenizer.bytes_per_token)
    }

    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        let template = |role: Role, path: &Option<PathBuf>| match path {
            Some(p) => PromptTemplate::from_file(role, &self.resolve(p))
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(PromptTemplate::default_for(role)),
        };
        Ok(EngineConfig {
            partition: self.chunk,
            mrt: self.run.mrt,
            replay_offset: self.run.replay_offset,
            parse_retries: self.run.parse_retries,
            retry: RetryPolicy {
                attempts: self.backend.retries,
                base_delay: Duration::from_millis(self.backend.backoff_ms),
            },
            model: self.backend.model.clone(),
            max_output_tokens: self.backend.max_output_tokens,
            temperature: self.backend.temperature,
            context_window: self.backend.context_window,
            refusals: RefusalLexicon::new(&self.memory.refusals),
            explorer_template: template(Role::Explorer, &self.prompts.explorer)?,
            decider_template: template(Role::Decider, &self.prompts.decider)?,
            record_timings: self.trace.record_timings,
        })
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>, ConfigError> {
        match self.backend.kind {
            BackendKind::Http => Ok(Box::new(HttpBackend::new(HttpConfig {
                base_url: self.backend.base_url.clone(),
                api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
                timeout: Duration::from_secs(self.backend.timeout_s),
                max_concurrency: self.backend.max_concurrency,
            }))),
            BackendKind::Scripted => {
                let path = self.backend.scenario.as_ref().ok_or_else(|| {
                    ConfigError::Invalid(
                        "backend.scenario is required for the scripted backend".into(),
                    )
                })?;
                let scenario = Scenario::load(&self.resolve(path)).map_err(ConfigError::Invalid)?;
                Ok(Box::new(ScriptedBackend::new(scenario)))
            }
        }
    }
}
