//! Chat-completions client with deterministic record/replay and a mock
//! backend, so the whole pipeline runs offline.
//!
//! Requests are canonicalized to a stable byte encoding and fingerprinted;
//! the replay cache is an append-only JSONL file keyed by fingerprint.
//! Credentials come only from environment variables named in the provider
//! config.

mod cache;
mod wire;

pub use cache::{CacheRecord, ReplayCache};
pub use wire::{build_request, canonicalize, fingerprint};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::AssembledPrompt;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider `{0}` does not accept image input")]
    Capability(String),
    #[error("replay miss: no cached exchange for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("environment variable `{0}` with the API key is not set")]
    MissingApiKey(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("cache file {path}: {message}")]
    Cache { path: String, message: String },
    #[error("provider config {path}: {message}")]
    Config { path: String, message: String },
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
}

/// Dollars per one million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub input: f64,
    pub cached_input: f64,
    pub output: f64,
}

/// Static description of one chat-completions endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub endpoint_url: String,
    pub model_id: String,
    pub supports_images: bool,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub pricing: Pricing,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: String,
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

/// Token counts reported by the provider.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub cached_input_tokens: u64,
    pub output_tokens: u64,
}

/// One request/response round trip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatExchange {
    pub fingerprint: String,
    pub request: serde_json::Value,
    pub response_text: String,
    pub usage: Usage,
    pub latency_secs: f64,
    pub provider: String,
}

/// How `complete` satisfies a request.
#[derive(Debug, Clone)]
pub enum CompletionMode {
    /// One network call with bounded retries.
    Live,
    /// Serve from cache when possible, otherwise call out and append.
    Record(Arc<ReplayCache>),
    /// Cache only; a miss is an error. Zero network.
    Replay(Arc<ReplayCache>),
    /// Fixed canned response; zero network, zero latency.
    Mock(String),
}

impl CompletionMode {
    pub fn name(&self) -> &'static str {
        match self {
            CompletionMode::Live => "live",
            CompletionMode::Record(_) => "record",
            CompletionMode::Replay(_) => "replay",
            CompletionMode::Mock(_) => "mock",
        }
    }

    fn needs_credentials(&self) -> bool {
        matches!(self, CompletionMode::Live | CompletionMode::Record(_))
    }
}

/// Thread-safe chat-completions client; cheap to share across workers.
pub struct ChatClient {
    provider: ProviderConfig,
    mode: CompletionMode,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl ChatClient {
    /// Builds the client, failing fast when live/record mode lacks the
    /// API-key environment variable.
    pub fn new(provider: ProviderConfig, mode: CompletionMode) -> Result<Self, LlmError> {
        let api_key = if mode.needs_credentials() {
            let var = &provider.api_key_env;
            if var.is_empty() {
                return Err(LlmError::MissingApiKey("<api_key_env unset>".into()));
            }
            Some(std::env::var(var).map_err(|_| LlmError::MissingApiKey(var.clone()))?)
        } else {
            None
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(provider.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(ChatClient {
            provider,
            mode,
            http,
            api_key,
        })
    }

    pub fn provider(&self) -> &ProviderConfig {
        &self.provider
    }

    pub fn mode_name(&self) -> &'static str {
        self.mode.name()
    }

    /// Completes one prompt according to the configured mode.
    pub fn complete(&self, prompt: &AssembledPrompt) -> Result<ChatExchange, LlmError> {
        if prompt.has_image() && !self.provider.supports_images {
            return Err(LlmError::Capability(self.provider.name.clone()));
        }
        let request = build_request(prompt, &self.provider);
        let fp = fingerprint(&request);

        match &self.mode {
            CompletionMode::Mock(text) => Ok(ChatExchange {
                fingerprint: fp,
                request,
                response_text: text.clone(),
                usage: Usage::default(),
                latency_secs: 0.0,
                provider: self.provider.name.clone(),
            }),
            CompletionMode::Replay(cache) => cache
                .get(&fp)
                .map(|rec| rec.into_exchange())
                .ok_or(LlmError::ReplayMiss { fingerprint: fp }),
            CompletionMode::Record(cache) => {
                if let Some(rec) = cache.get(&fp) {
                    return Ok(rec.into_exchange());
                }
                let exchange = self.send_with_retries(&request, fp)?;
                cache.append(&CacheRecord::from_exchange(&exchange))?;
                Ok(exchange)
            }
            CompletionMode::Live => self.send_with_retries(&request, fp),
        }
    }

    fn send_with_retries(
        &self,
        request: &serde_json::Value,
        fp: String,
    ) -> Result<ChatExchange, LlmError> {
        use rand::Rng;
        let max_attempts = self.provider.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..max_attempts {
            if attempt > 0 {
                // exponential backoff from 1s, doubled each retry, jittered
                let base = 1000u64 << (attempt - 1).min(6);
                let jitter = rand::rng().random_range(0..=base / 4);
                std::thread::sleep(Duration::from_millis(base + jitter));
            }
            let started = Instant::now();
            let mut call = self
                .http
                .post(&self.provider.endpoint_url)
                .header("content-type", "application/json");
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            match call.body(canonicalize(request)).send() {
                Ok(response) => {
                    let status = response.status();
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = format!("HTTP {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(LlmError::Transport {
                            attempts: attempt + 1,
                            message: format!("HTTP {status} (not retryable)"),
                        });
                    }
                    let latency_secs = started.elapsed().as_secs_f64();
                    let body: serde_json::Value =
                        response.json().map_err(|e| LlmError::BadResponse(e.to_string()))?;
                    let (response_text, usage) = wire::parse_response(&body)?;
                    return Ok(ChatExchange {
                        fingerprint: fp,
                        request: request.clone(),
                        response_text,
                        usage,
                        latency_secs,
                        provider: self.provider.name.clone(),
                    });
                }
                Err(e) => {
                    last_error = e.to_string();
                    if !(e.is_timeout() || e.is_connect() || e.is_request()) {
                        return Err(LlmError::Transport {
                            attempts: attempt + 1,
                            message: last_error,
                        });
                    }
                }
            }
        }
        Err(LlmError::Transport {
            attempts: max_attempts,
            message: last_error,
        })
    }
}

/// Provider config file: a TOML table of `[providers.<name>]` entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderFile {
    pub providers: BTreeMap<String, ProviderConfig>,
}

impl ProviderFile {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut file: ProviderFile = toml::from_str(&text).map_err(|e| LlmError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        for (name, provider) in file.providers.iter_mut() {
            provider.name = name.clone();
        }
        Ok(file)
    }

    pub fn get(&self, name: &str) -> Result<&ProviderConfig, LlmError> {
        self.providers
            .get(name)
            .ok_or_else(|| LlmError::UnknownProvider(name.to_string()))
    }
}
