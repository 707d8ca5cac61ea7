//! Command errors and their exit codes.

use std::path::PathBuf;

use gamerank_core::data::DataError;
use gamerank_core::eval::EvalError;
use gamerank_core::jsonl::JsonlError;
use gamerank_core::profile::ProfileError;
use gamerank_core::prompts::PromptError;
use gamerank_core::provider::ProviderError;
use gamerank_core::strategy::StrategyError;
use gamerank_core::synth::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: missing input {what} at {} (run `gamerank {producer}` first)", path.display())]
    MissingInput {
        stage: &'static str,
        what: &'static str,
        path: PathBuf,
        producer: &'static str,
    },
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Provider { stage: &'static str, message: String },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::MissingInput { .. } | Self::Data { .. } | Self::Io { .. } => 2,
            Self::Provider { .. } => 3,
        }
    }

    pub fn data(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self::Data {
            stage,
            message: e.to_string(),
        }
    }

    pub fn provider(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self::Provider {
            stage,
            message: e.to_string(),
        }
    }
}

/// Maps library errors onto data or provider failures of a stage.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl<T> StageContext<T> for Result<T, $t> {
            fn stage(self, stage: &'static str) -> Result<T, CliError> {
                self.map_err(|e| CliError::data(stage, e))
            }
        }
    )*};
}

data_errors!(DataError, JsonlError, EvalError, SynthError, PromptError);

impl<T> StageContext<T> for Result<T, ProviderError> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::provider(stage, e))
    }
}

impl<T> StageContext<T> for Result<T, ProfileError> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| match e {
            ProfileError::Store(e) => CliError::data(stage, e),
            other => CliError::provider(stage, other),
        })
    }
}

impl<T> StageContext<T> for Result<T, StrategyError> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| match e {
            StrategyError::Store(e) => CliError::data(stage, e),
            other => CliError::provider(stage, other),
        })
    }
}
