//! Command-line flags, the optional TOML config file, and their merge.
//!
//! Precedence: flag, then config file, then built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gamerank_core::eval::RelevanceMapping;
use gamerank_core::rerank::ModelKind;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gamerank", version, about = "Game profiling, personalized LLM reranking and NDCG Engagement evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    LogMinutes,
    Binary,
    RawSeconds,
}

impl From<Mapping> for RelevanceMapping {
    fn from(m: Mapping) -> Self {
        match m {
            Mapping::LogMinutes => Self::LogMinutes,
            Mapping::Binary => Self::Binary,
            Mapping::RawSeconds => Self::RawSeconds,
        }
    }
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Directory holding games/histories/rankings/labels files.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Directory for stores, reports and curves.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    /// TOML file with defaults for any of these settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Chat-completions endpoint of the remote provider.
    #[arg(long, global = true)]
    pub llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    /// Budget for the sampled in-game text of one profile prompt.
    #[arg(long, global = true)]
    pub max_prompt_tokens: Option<usize>,
    /// Concurrent completions per stage.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    /// Tolerated fraction of failed games or users per stage.
    #[arg(long, global = true)]
    pub failure_threshold: Option<f64>,
    /// Directory with replacement prompt templates.
    #[arg(long, global = true)]
    pub prompts_dir: Option<PathBuf>,
    /// Corrupt this fraction of mock completions (exercises repair paths).
    #[arg(long, global = true)]
    pub mock_fault_rate: Option<f64>,
    /// Timestamp recorded on new profiles.
    #[arg(long, global = true)]
    pub created_at: Option<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Generate game profiles for every game in scope.
    Profile,
    /// Generate a ranking strategy for every user with a profiled history.
    Strategize(StrategizeArgs),
    /// Rerank each user's top slice with the selected models.
    Rerank(RerankArgs),
    /// Score stored reranks and write report cells.
    Eval(EvalArgs),
    /// Render the report table and the position-engagement curve.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub games: Option<usize>,
    #[arg(long)]
    pub sharpness: Option<f64>,
    #[arg(long)]
    pub noise_fraction: Option<f64>,
    #[arg(long)]
    pub baseline_swaps: Option<f64>,
    #[arg(long)]
    pub empty_history_users: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StrategizeArgs {
    /// Separate user-profile and strategy completions (not supported).
    #[arg(long)]
    pub two_stage_strategy: bool,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub runs: Option<usize>,
    /// Rank cutoffs; the largest sets the reranked slice length.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub relevance: Option<Mapping>,
    #[arg(long)]
    pub relevance_cap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

/// Contents of the `--config` file; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub provider: Option<ProviderKind>,
    pub seed: Option<u64>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub max_prompt_tokens: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub failure_threshold: Option<f64>,
    pub prompts_dir: Option<PathBuf>,
    pub mock_fault_rate: Option<f64>,
    pub runs: Option<usize>,
    pub cutoffs: Option<Vec<usize>>,
    pub models: Option<Vec<String>>,
    pub relevance: Option<Mapping>,
    pub relevance_cap: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Settings shared by all stages after merging flags and config.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub work_dir: PathBuf,
    pub provider: ProviderKind,
    pub seed: u64,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub max_prompt_tokens: usize,
    pub max_in_flight: usize,
    pub failure_threshold: f64,
    pub prompts_dir: Option<PathBuf>,
    pub mock_fault_rate: f64,
    pub created_at: Option<String>,
}

impl Settings {
    pub fn resolve(global: &GlobalArgs, file: &FileConfig) -> Result<Self, CliError> {
        let s = Self {
            data_dir: global.data_dir.clone().or_else(|| file.data_dir.clone()).unwrap_or_else(|| "data".into()),
            work_dir: global.work_dir.clone().or_else(|| file.work_dir.clone()).unwrap_or_else(|| "work".into()),
            provider: global.provider.or(file.provider).unwrap_or(ProviderKind::Mock),
            seed: global.seed.or(file.seed).unwrap_or(0),
            llm_endpoint: global.llm_endpoint.clone().or_else(|| file.llm_endpoint.clone()),
            llm_model: global.llm_model.clone().or_else(|| file.llm_model.clone()),
            max_prompt_tokens: global
                .max_prompt_tokens
                .or(file.max_prompt_tokens)
                .unwrap_or(gamerank_core::sampler::DEFAULT_MAX_PROMPT_TOKENS),
            max_in_flight: global.max_in_flight.or(file.max_in_flight).unwrap_or(8),
            failure_threshold: global.failure_threshold.or(file.failure_threshold).unwrap_or(0.05),
            prompts_dir: global.prompts_dir.clone().or_else(|| file.prompts_dir.clone()),
            mock_fault_rate: global.mock_fault_rate.or(file.mock_fault_rate).unwrap_or(0.0),
            created_at: global.created_at.clone(),
        };
        if s.max_prompt_tokens == 0 {
            return Err(CliError::Usage("--max-prompt-tokens must be positive".into()));
        }
        if s.max_in_flight == 0 {
            return Err(CliError::Usage("--max-in-flight must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.failure_threshold) {
            return Err(CliError::Usage("--failure-threshold must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&s.mock_fault_rate) {
            return Err(CliError::Usage("--mock-fault-rate must be in [0,1]".into()));
        }
        Ok(s)
    }
}

/// Models from the flag or the config file; all five by default.
pub fn resolve_models(flag: Option<Vec<ModelKind>>, file: &FileConfig) -> Result<Vec<ModelKind>, CliError> {
    if let Some(m) = flag {
        return Ok(m);
    }
    match &file.models {
        Some(names) => names
            .iter()
            .map(|n| n.parse().map_err(|e| CliError::Usage(format!("config models: {e}"))))
            .collect(),
        None => Ok(ModelKind::ALL.to_vec()),
    }
}
