//! Blocking client for OpenAI-compatible chat-completion endpoints.
//!
//! Requests are `POST {base_url}/chat/completions` with the body
//! `{model, messages, temperature, max_tokens}` and nothing else. The API key
//! is read from the configured environment variable on every call and sent as
//! a bearer token; it never appears in logs, configs or traces.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const DEFAULT_API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("conversation is empty")]
    EmptyConversation,
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("transport failed after {attempts} attempt(s): {last_error}")]
    Transport { attempts: u32, last_error: String },
    #[error("malformed completion response ({reason}): {raw}")]
    Parse { reason: String, raw: String },
    #[error("cannot build HTTP client: {0}")]
    Setup(String),
}

impl LlmError {
    /// Whether the failure came from the network or the remote service
    /// rather than from the caller.
    pub fn is_transport(&self) -> bool {
        matches!(self, LlmError::Transport { .. } | LlmError::Auth { .. } | LlmError::Rejected { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// Where and how to reach one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// API root, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Wait before retry `k` is `retry_backoff_ms[min(k, len - 1)]`.
    pub retry_backoff_ms: Vec<u64>,
    /// Concurrent in-flight requests allowed through one client.
    pub max_concurrent_requests: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model_name: "gpt-3.5-turbo".to_string(),
            api_key_env_var: DEFAULT_API_KEY_ENV.to_string(),
            temperature: 0.7,
            max_tokens: 512,
            timeout_ms: 60_000,
            max_retries: 3,
            retry_backoff_ms: vec![500, 1_000, 2_000, 4_000],
            max_concurrent_requests: 8,
        }
    }
}

impl EndpointConfig {
    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, retry: u32) -> Duration {
        match self.retry_backoff_ms.len() {
            0 => Duration::ZERO,
            n => Duration::from_millis(self.retry_backoff_ms[(retry as usize).min(n - 1)]),
        }
    }
}

/// JSON body for one completion request.
pub fn request_body(config: &EndpointConfig, messages: &[ChatMessage]) -> Value {
    json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    })
}

/// Content of the first choice of a completion response.
pub fn parse_completion(raw: &str) -> Result<String, LlmError> {
    let parsed: Value =
        serde_json::from_str(raw).map_err(|e| LlmError::Parse { reason: e.to_string(), raw: raw.to_string() })?;
    parsed.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string).ok_or_else(|| {
        LlmError::Parse { reason: "missing choices[0].message.content".to_string(), raw: raw.to_string() }
    })
}

/// Anything that can answer a conversation with a single reply.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&[ChatMessage]) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self(messages)
    }
}

/// Counting gate limiting in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Gate { free: Mutex::new(permits.max(1)), cond: Condvar::new() }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.gate.cond.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(LlmError),
}

/// Shareable client; clones share the connection pool and the request gate.
#[derive(Debug, Clone)]
pub struct LlmClient {
    config: Arc<EndpointConfig>,
    http: Client,
    gate: Arc<Gate>,
}

impl LlmClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let http = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Setup(e.to_string()))?;
        let gate = Arc::new(Gate::new(config.max_concurrent_requests));
        Ok(LlmClient { config: Arc::new(config), http, gate })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Sends one completion request, retrying 429, 5xx and network failures.
    /// At most `1 + max_retries` requests are issued.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyConversation);
        }
        let url = self.config.completions_url();
        let body = request_body(&self.config, messages);
        let attempts = 1 + self.config.max_retries;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt - 1));
            }
            debug!("POST {url} model={} attempt={}/{attempts}", self.config.model_name, attempt + 1);
            match self.attempt(&url, &body) {
                Attempt::Done(content) => return Ok(content),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(reason) => {
                    warn!("completion attempt {} failed: {reason}", attempt + 1);
                    last_error = reason;
                }
            }
        }
        Err(LlmError::Transport { attempts, last_error })
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let _permit = self.gate.acquire();
        let mut request = self.http.post(url).json(body);
        if let Ok(key) = std::env::var(&self.config.api_key_env_var) {
            if !key.is_empty() {
                request = request.bearer_auth(key);
            }
        }
        let response = match request.send() {
            Ok(response) => response,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(text) => text,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match status {
            s if s.is_success() => match parse_completion(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fail(e),
            },
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                Attempt::Fail(LlmError::Auth { status: status.as_u16(), body: text })
            }
            StatusCode::TOO_MANY_REQUESTS | StatusCode::REQUEST_TIMEOUT => {
                Attempt::Retry(format!("HTTP {}", status.as_u16()))
            }
            s if s.is_server_error() => Attempt::Retry(format!("HTTP {}: {text}", s.as_u16())),
            s => Attempt::Fail(LlmError::Rejected { status: s.as_u16(), body: text }),
        }
    }
}

impl ChatBackend for LlmClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        LlmClient::complete(self, messages)
    }
}

/// One-shot convenience wrapper around [`LlmClient::complete`].
pub fn complete(config: &EndpointConfig, messages: &[ChatMessage]) -> Result<String, LlmError> {
    LlmClient::new(config.clone())?.complete(messages)
}
