//! Chat-model providers: OpenAI-compatible HTTP, scripted, and a
//! record/replay cache wrapper.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: 0.7,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

impl Sampling {
    /// Ranges accepted by OpenAI-compatible endpoints.
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p {} outside (0, 1]", self.top_p));
        }
        for (k, v) in [("frequency_penalty", self.frequency_penalty), ("presence_penalty", self.presence_penalty)] {
            if !(-2.0..=2.0).contains(&v) {
                return Err(format!("{k} {v} outside [-2, 2]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub sampling: Sampling,
}

impl ChatRequest {
    pub fn prompt_chars(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("missing credential: set {0}")]
    MissingKey(String),
    #[error("no cached response for request {0}")]
    CacheMiss(String),
    #[error("scripted provider {0} has no response left")]
    ScriptExhausted(String),
}

pub trait ChatProvider: Send + Sync {
    /// Stable identity, part of the cache key.
    fn name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

/// `GOATX_PROVIDER_<NAME>_KEY`, name upper-cased with non-alphanumerics as `_`.
pub fn key_env_var(binding_name: &str) -> String {
    let up: String = binding_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("GOATX_PROVIDER_{up}_KEY")
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpProvider {
    name: String,
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    /// Reads the API key from the binding's environment variable.
    pub fn from_env(name: &str, base_url: &str, timeout: Duration) -> Result<Self, ProviderError> {
        let var = key_env_var(name);
        let api_key = std::env::var(&var).map_err(|_| ProviderError::MissingKey(var))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider {
            name: name.to_string(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }
}

impl ChatProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = serde_json::json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.sampling.temperature,
            "top_p": req.sampling.top_p,
            "frequency_penalty": req.sampling.frequency_penalty,
            "presence_penalty": req.sampling.presence_penalty,
        });
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| ProviderError::Decode(e.to_string()))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderError::Decode("no choices[0].message.content".into()))?
            .to_string();
        let usage = match (v["usage"]["prompt_tokens"].as_u64(), v["usage"]["completion_tokens"].as_u64()) {
            (Some(i), Some(o)) => Some(Usage {
                input_tokens: i,
                output_tokens: o,
            }),
            _ => None,
        };
        Ok(ChatResponse { text: content, usage })
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync;

/// Returns queued responses in order, then defers to an optional responder.
pub struct ScriptedProvider {
    name: String,
    queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    fallback: Option<Box<Responder>>,
    calls: AtomicUsize,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedProvider {
    pub fn new(name: &str, script: Vec<Result<String, ProviderError>>) -> Self {
        ScriptedProvider {
            name: name.to_string(),
            queue: Mutex::new(script.into()),
            fallback: None,
            calls: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn from_fn<F>(name: &str, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        ScriptedProvider {
            fallback: Some(Box::new(f)),
            ..ScriptedProvider::new(name, Vec::new())
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every request received, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(req.clone());
        let next = self.queue.lock().unwrap().pop_front();
        let text = match (next, &self.fallback) {
            (Some(r), _) => r?,
            (None, Some(f)) => f(req)?,
            (None, None) => return Err(ProviderError::ScriptExhausted(self.name.clone())),
        };
        Ok(ChatResponse { text, usage: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Serve hits, forward misses and record them.
    Record,
    /// Serve hits only; a miss is an error.
    ReplayOnly,
}

#[derive(Debug, Serialize, Deserialize)]
struct Transcript {
    provider: String,
    request: ChatRequest,
    response: ChatResponse,
}

/// Persists transcripts as `<dir>/<sha256>.json`, keyed by provider name and request.
pub struct CachedProvider {
    inner: Arc<dyn ChatProvider>,
    dir: PathBuf,
    mode: CacheMode,
}

impl CachedProvider {
    pub fn new(inner: Arc<dyn ChatProvider>, dir: &Path, mode: CacheMode) -> Self {
        CachedProvider {
            inner,
            dir: dir.to_path_buf(),
            mode,
        }
    }

    pub fn cache_key(provider: &str, req: &ChatRequest) -> String {
        let canonical = serde_json::to_vec(&(provider, req)).expect("serialisable");
        hex::encode(Sha256::digest(&canonical))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }
}

impl ChatProvider for CachedProvider {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let key = Self::cache_key(self.inner.name(), req);
        let path = self.path(&key);
        if let Ok(bytes) = std::fs::read(&path) {
            let t: Transcript =
                serde_json::from_slice(&bytes).map_err(|e| ProviderError::Decode(format!("{}: {e}", path.display())))?;
            return Ok(t.response);
        }
        if self.mode == CacheMode::ReplayOnly {
            return Err(ProviderError::CacheMiss(key));
        }
        let response = self.inner.complete(req)?;
        let t = Transcript {
            provider: self.inner.name().to_string(),
            request: req.clone(),
            response: response.clone(),
        };
        let body = serde_json::to_vec_pretty(&t).expect("serialisable");
        write_atomic(&path, &body).map_err(|e| ProviderError::Transport(format!("cache write: {e}")))?;
        Ok(response)
    }
}

/// Write through a sibling temp file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    static SEQ: AtomicUsize = AtomicUsize::new(0);
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id(),
        SEQ.fetch_add(1, Ordering::SeqCst)
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
