//! HTTP chat-completion client with exponential backoff.
//!
//! Sends a single-turn user message in the common chat-completions shape and
//! extracts `choices[0].message.content`. A body that is not JSON at all is
//! taken as the completion text itself.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{CompletionProvider, CompletionRequest, ProviderError, ProviderErrorClass};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
            max_attempts: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

pub struct RemoteProvider {
    config: RemoteConfig,
    client: Client,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::new(ProviderErrorClass::Network, e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "seed": request.seed,
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            let class = if e.is_timeout() {
                ProviderErrorClass::Timeout
            } else {
                ProviderErrorClass::Network
            };
            ProviderError::new(class, e.to_string())
        })?;

        let status = resp.status();
        let text = resp.text().map_err(|e| {
            let class = if e.is_timeout() {
                ProviderErrorClass::Timeout
            } else {
                ProviderErrorClass::Network
            };
            ProviderError::new(class, e.to_string())
        })?;

        if !status.is_success() {
            return Err(ProviderError::new(classify_status(status), format!("HTTP {status}: {}", snippet(&text))));
        }
        extract_content(&text)
    }
}

fn classify_status(status: StatusCode) -> ProviderErrorClass {
    match status.as_u16() {
        429 => ProviderErrorClass::RateLimited,
        408 | 504 => ProviderErrorClass::Timeout,
        s if s >= 500 => ProviderErrorClass::Network,
        // other client errors cannot succeed on retry
        _ => ProviderErrorClass::MalformedResponse,
    }
}

fn snippet(s: &str) -> &str {
    let mut end = s.len().min(200);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

fn extract_content(body: &str) -> Result<String, ProviderError> {
    match serde_json::from_str::<Value>(body) {
        Ok(v) => v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::new(
                    ProviderErrorClass::MalformedResponse,
                    format!("no choices[0].message.content in {}", snippet(body)),
                )
            }),
        Err(_) if !body.trim().is_empty() => Ok(body.to_string()),
        Err(_) => Err(ProviderError::new(ProviderErrorClass::MalformedResponse, "empty response body")),
    }
}

impl CompletionProvider for RemoteProvider {
    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.class.is_retryable() => {
                    tracing::debug!(attempt, error = %e, "retryable completion failure");
                    last = Some(e);
                    if attempt < attempts {
                        thread::sleep(self.config.backoff(attempt));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let last = last.expect("at least one attempt");
        Err(ProviderError::new(
            ProviderErrorClass::ExhaustedRetries,
            format!("{attempts} attempts, last: {last}"),
        ))
    }
}
