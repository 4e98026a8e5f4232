//! Chat-completions client with retries and an on-disk response cache.

use crate::AnnotationError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const DEFAULT_API_KEY_ENV: &str = "DATAPRICE_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL such as `https://api.example.com/v1`, or the full
    /// `.../chat/completions` URL.
    pub url: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    pub retries: u32,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: "deepseek-chat".into(),
            timeout_secs: 60.0,
            retries: 3,
            backoff_ms: 500,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            cache_dir: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.url.is_empty() {
            return Err(AnnotationError::Config("endpoint url is empty".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(AnnotationError::Config("timeout must be positive".into()));
        }
        if self.model.is_empty() {
            return Err(AnnotationError::Config("model name is empty".into()));
        }
        Ok(())
    }

    fn completions_url(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Responses keyed by SHA-256 of (model, prompt). Writes go through a
/// temporary file and a rename, so concurrent writers of the same key leave
/// one complete file behind.
#[derive(Clone, Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(prompt: &str, model: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, prompt: &str, model: &str) -> Option<String> {
        std::fs::read_to_string(self.path(&Self::key(prompt, model))).ok()
    }

    pub fn put(&self, prompt: &str, model: &str, response: &str) -> Result<(), AnnotationError> {
        let key = Self::key(prompt, model);
        std::fs::create_dir_all(&self.dir).map_err(|e| cache_err(&self.dir, e))?;
        let tmp = self.dir.join(format!(".{key}.{}.{:?}.tmp", std::process::id(), std::thread::current().id()));
        std::fs::write(&tmp, response).map_err(|e| cache_err(&tmp, e))?;
        std::fs::rename(&tmp, self.path(&key)).map_err(|e| cache_err(&tmp, e))
    }
}

fn cache_err(p: &Path, e: std::io::Error) -> AnnotationError {
    AnnotationError::Cache(format!("{}: {e}", p.display()))
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(AnnotationError),
}

fn attempt(client: &reqwest::blocking::Client, config: &EndpointConfig, prompt: &str) -> Attempt {
    let body = ChatRequest {
        model: &config.model,
        messages: [Message { role: "user", content: prompt }],
        temperature: 0.0,
    };
    let mut req = client.post(config.completions_url()).json(&body);
    if let Ok(key) = std::env::var(&config.api_key_env) {
        req = req.bearer_auth(key);
    }
    let resp = match req.send() {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    let status = resp.status();
    if status.is_server_error() || status.as_u16() == 429 {
        return Attempt::Retry(format!("status {status}"));
    }
    let text = match resp.text() {
        Ok(t) => t,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    if !status.is_success() {
        return Attempt::Fail(AnnotationError::Status { status: status.as_u16(), body: text.chars().take(200).collect() });
    }
    match serde_json::from_str::<ChatResponse>(&text) {
        Ok(r) => match r.choices.into_iter().next() {
            Some(c) => Attempt::Done(c.message.content),
            None => Attempt::Fail(AnnotationError::Malformed("response has no choices".into())),
        },
        Err(e) => Attempt::Fail(AnnotationError::Malformed(format!("completion body: {e}"))),
    }
}

/// One chat completion at temperature 0, served from the cache when present.
pub fn call_llm(prompt: &str, config: &EndpointConfig) -> Result<String, AnnotationError> {
    config.validate()?;
    let cache = config.cache_dir.as_ref().map(ResponseCache::new);
    if let Some(hit) = cache.as_ref().and_then(|c| c.get(prompt, &config.model)) {
        log::debug!("annotation cache hit");
        return Ok(hit);
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(config.timeout_secs))
        .build()
        .map_err(|e| AnnotationError::Config(e.to_string()))?;
    let mut last = String::new();
    for i in 0..=config.retries {
        if i > 0 {
            let delay = config.backoff_ms.saturating_mul(1 << (i - 1).min(16));
            log::warn!("annotation request failed ({last}); retry {i} in {delay} ms");
            std::thread::sleep(Duration::from_millis(delay));
        }
        match attempt(&client, config, prompt) {
            Attempt::Done(text) => {
                if let Some(c) = &cache {
                    c.put(prompt, &config.model, &text)?;
                }
                return Ok(text);
            }
            Attempt::Retry(msg) => last = msg,
            Attempt::Fail(e) => return Err(e),
        }
    }
    Err(AnnotationError::Transport { attempts: config.retries + 1, message: last })
}
