//! Completion providers.
//!
//! Everything downstream talks to a [`CompletionProvider`]. Three
//! implementations ship: [`RemoteProvider`] (HTTP chat completion with
//! retry), [`MockProvider`] (deterministic, rule based) and
//! [`AdversarialMock`] (the mock with seeded output corruption).

mod adversarial;
mod mock;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use adversarial::{AdversarialMock, FaultSchedule};
pub use mock::{GenreLexicon, MockProvider};
pub use remote::{RemoteConfig, RemoteProvider};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
}

impl CompletionRequest {
    pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

    /// Temperature-0 request with the default output cap.
    pub fn new(prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            max_output_tokens: Self::DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |detail: String| Err(ProviderError::new(ProviderErrorClass::MalformedResponse, detail));
        if self.prompt.is_empty() {
            return bad("empty prompt".into());
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorClass {
    Network,
    RateLimited,
    Timeout,
    MalformedResponse,
    ExhaustedRetries,
}

impl ProviderErrorClass {
    pub fn is_retryable(self) -> bool {
        matches!(self, Self::Network | Self::RateLimited | Self::Timeout)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Network => "network",
            Self::RateLimited => "rate_limited",
            Self::Timeout => "timeout",
            Self::MalformedResponse => "malformed_response",
            Self::ExhaustedRetries => "exhausted_retries",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}: {detail}", class.as_str())]
pub struct ProviderError {
    pub class: ProviderErrorClass,
    pub detail: String,
}

impl ProviderError {
    pub fn new(class: ProviderErrorClass, detail: impl Into<String>) -> Self {
        Self {
            class,
            detail: detail.into(),
        }
    }
}

/// A single-turn text completion backend.
pub trait CompletionProvider: Send + Sync {
    /// Model identifier recorded alongside generated artifacts.
    fn model_name(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

impl fmt::Debug for dyn CompletionProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CompletionProvider({})", self.model_name())
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for std::sync::Arc<P> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        assert!(CompletionRequest::new("hi", 0).validate().is_ok());
        assert!(CompletionRequest::new("", 0).validate().is_err());
        let mut r = CompletionRequest::new("hi", 0);
        r.temperature = 2.5;
        assert!(r.validate().is_err());
        r.temperature = 2.0;
        r.max_output_tokens = 0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn retry_policy_follows_class() {
        use ProviderErrorClass::*;
        assert!(RateLimited.is_retryable());
        assert!(Timeout.is_retryable());
        assert!(!MalformedResponse.is_retryable());
        assert!(!ExhaustedRetries.is_retryable());
        assert_eq!(
            ProviderError::new(RateLimited, "slow down").to_string(),
            "rate_limited: slow down"
        );
    }
}
