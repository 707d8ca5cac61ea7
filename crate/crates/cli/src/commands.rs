//! One function per pipeline stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gamerank_core::data::{load_corpus, validate_corpus, Corpus, CorpusPaths, GameId, GameProfile};
use gamerank_core::eval::{
    curve_csv, evaluate, rerank_all, EvalCell, EvalReport, ExperimentInputs, ExperimentSpec, RelevanceParams,
    RerankRecord, DEFAULT_CUTOFFS,
};
use gamerank_core::jsonl;
use gamerank_core::profile::{profile_corpus, text_fingerprint, BatchOptions, ProfileSettings, ProfileStore};
use gamerank_core::prompts::PromptSet;
use gamerank_core::provider::{AdversarialMock, CompletionProvider, FaultSchedule, MockProvider, RemoteConfig, RemoteProvider};
use gamerank_core::rerank::{ModelKind, MAX_RERANK_K};
use gamerank_core::sampler::TokenBudget;
use gamerank_core::strategy::{cached_strategies, strategize_users, StrategyOptions, StrategyStore};
use gamerank_core::synth::{write_synthetic, SynthSpec};

use crate::config::{resolve_models, EvalArgs, FileConfig, ProviderKind, RerankArgs, ReportArgs, ReportFormat, Settings, StrategizeArgs, SynthArgs};
use crate::error::{CliError, StageContext};

pub const PROFILE_STORE: &str = "profiles.jsonl";
pub const STRATEGY_STORE: &str = "strategies.jsonl";
pub const RERANK_STORE: &str = "reranks.jsonl";
pub const EVAL_CELLS: &str = "eval_cells.jsonl";
pub const REPORT_FILE: &str = "report.txt";
pub const CURVE_FILE: &str = "curve.csv";

/// What a command prints on success.
pub struct Output {
    pub stdout: String,
    pub warnings: Vec<String>,
}

impl Output {
    fn line(s: impl Into<String>) -> Self {
        Self {
            stdout: s.into(),
            warnings: Vec::new(),
        }
    }
}

fn work_file(settings: &Settings, name: &str) -> PathBuf {
    settings.work_dir.join(name)
}

fn require(stage: &'static str, what: &'static str, path: PathBuf, producer: &'static str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingInput {
            stage,
            what,
            path,
            producer,
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

fn load(stage: &'static str, settings: &Settings) -> Result<Corpus, CliError> {
    let paths = CorpusPaths::in_dir(&settings.data_dir);
    for (what, p) in [
        ("games file", &paths.games),
        ("histories file", &paths.histories),
        ("rankings file", &paths.rankings),
        ("labels file", &paths.labels),
    ] {
        require(stage, what, p.clone(), "synth")?;
    }
    load_corpus(&paths).stage(stage)
}

fn prompts(stage: &'static str, settings: &Settings) -> Result<PromptSet, CliError> {
    match &settings.prompts_dir {
        Some(dir) => PromptSet::from_dir(dir).stage(stage),
        None => Ok(PromptSet::builtin()),
    }
}

fn provider(stage: &'static str, settings: &Settings) -> Result<Box<dyn CompletionProvider>, CliError> {
    match settings.provider {
        ProviderKind::Mock if settings.mock_fault_rate > 0.0 => Ok(Box::new(AdversarialMock::new(
            MockProvider::default(),
            FaultSchedule::Rate(settings.mock_fault_rate),
        ))),
        ProviderKind::Mock => Ok(Box::new(MockProvider::default())),
        ProviderKind::Remote => {
            let (Some(endpoint), Some(model)) = (&settings.llm_endpoint, &settings.llm_model) else {
                return Err(CliError::Usage(
                    "--provider remote needs --llm-endpoint and --llm-model (or the config keys)".into(),
                ));
            };
            Ok(Box::new(RemoteProvider::new(RemoteConfig::new(endpoint, model)).stage(stage)?))
        }
    }
}

/// Profiles whose stored fingerprint matches the game's current text.
fn current_profiles(corpus: &Corpus, store: &ProfileStore) -> BTreeMap<GameId, GameProfile> {
    corpus
        .games()
        .iter()
        .filter_map(|g| store.get(&g.id, &text_fingerprint(g)).map(|p| (g.id.clone(), p.clone())))
        .collect()
}

fn created_at(settings: &Settings) -> String {
    if let Some(t) = &settings.created_at {
        return t.clone();
    }
    let epoch = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse::<i64>().ok());
    let at = match (epoch, settings.provider) {
        (Some(secs), _) => chrono::DateTime::from_timestamp(secs, 0).unwrap_or_default(),
        (None, ProviderKind::Mock) => chrono::DateTime::UNIX_EPOCH,
        (None, ProviderKind::Remote) => chrono::Utc::now(),
    };
    at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn synth(settings: &Settings, args: &SynthArgs) -> Result<Output, CliError> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_users: args.users.unwrap_or(d.n_users),
        n_games: args.games.unwrap_or(d.n_games),
        preference_sharpness: args.sharpness.unwrap_or(d.preference_sharpness),
        noise_fraction: args.noise_fraction.unwrap_or(d.noise_fraction),
        baseline_swaps_per_item: args.baseline_swaps.unwrap_or(d.baseline_swaps_per_item),
        empty_history_users: args.empty_history_users.unwrap_or(d.empty_history_users),
        seed: settings.seed,
        ..d
    };
    let (corpus, _) = write_synthetic(&spec, &settings.data_dir).stage("synth")?;
    Ok(Output::line(format!("synth: wrote {} to {}", corpus.summary(), settings.data_dir.display())))
}

pub fn profile(settings: &Settings) -> Result<Output, CliError> {
    const STAGE: &str = "profile";
    let corpus = load(STAGE, settings)?;
    let mut warnings: Vec<String> = validate_corpus(&corpus, MAX_RERANK_K)
        .warnings
        .iter()
        .map(|w| w.to_string())
        .collect();
    let prompts = prompts(STAGE, settings)?;
    let provider = provider(STAGE, settings)?;
    let mut store = ProfileStore::open(&work_file(settings, PROFILE_STORE)).stage(STAGE)?;
    let options = BatchOptions {
        settings: ProfileSettings {
            budget: TokenBudget::new(settings.max_prompt_tokens).expect("validated positive"),
            seed: settings.seed,
            ..ProfileSettings::default()
        },
        top_k: MAX_RERANK_K,
        failure_threshold: settings.failure_threshold,
        max_in_flight: settings.max_in_flight,
        created_at: created_at(settings),
    };
    let outcome = profile_corpus(&corpus, &prompts.game_profile, provider.as_ref(), &mut store, &options).stage(STAGE)?;
    warnings.extend(outcome.failures.iter().map(|f| format!("profile failed for {}: {}", f.game_id, f.reason)));
    Ok(Output {
        stdout: format!(
            "profile: {} profiles ({} generated, {} cached, {} failed) in {}",
            outcome.profiles.len(),
            outcome.generated,
            outcome.cache_hits,
            outcome.failures.len(),
            store.path().display()
        ),
        warnings,
    })
}

fn load_profiles(stage: &'static str, settings: &Settings, corpus: &Corpus) -> Result<BTreeMap<GameId, GameProfile>, CliError> {
    let path = require(stage, "profile store", work_file(settings, PROFILE_STORE), "profile")?;
    let store = ProfileStore::open(&path).stage(stage)?;
    Ok(current_profiles(corpus, &store))
}

pub fn strategize(settings: &Settings, args: &StrategizeArgs) -> Result<Output, CliError> {
    const STAGE: &str = "strategize";
    if args.two_stage_strategy {
        return Err(CliError::Usage(
            "--two-stage-strategy is reserved and not supported; strategies use one combined completion".into(),
        ));
    }
    let corpus = load(STAGE, settings)?;
    let profiles = load_profiles(STAGE, settings, &corpus)?;
    let prompts = prompts(STAGE, settings)?;
    let provider = provider(STAGE, settings)?;
    let mut store = StrategyStore::open(&work_file(settings, STRATEGY_STORE)).stage(STAGE)?;
    let options = StrategyOptions {
        seed: settings.seed,
        max_in_flight: settings.max_in_flight,
        failure_threshold: settings.failure_threshold,
    };
    let batch = strategize_users(&corpus, &profiles, &prompts.user_strategy, provider.as_ref(), &mut store, &options)
        .stage(STAGE)?;
    // make sure the file exists even when every user was skipped
    jsonl::append::<()>(&work_file(settings, STRATEGY_STORE), &[]).stage(STAGE)?;
    Ok(Output {
        stdout: format!(
            "strategize: {} strategies ({} generated, {} cached), {} users without strategy",
            batch.strategies.len(),
            batch.generated,
            batch.cache_hits,
            batch.skipped.len()
        ),
        warnings: batch
            .skipped
            .iter()
            .map(|(u, why)| format!("no strategy for {u}: {why}"))
            .collect(),
    })
}

pub fn rerank(settings: &Settings, args: &RerankArgs, file: &FileConfig) -> Result<Output, CliError> {
    const STAGE: &str = "rerank";
    let corpus = load(STAGE, settings)?;
    let models = resolve_models(args.models.clone(), file)?;
    let needs_profiles = models
        .iter()
        .any(|m| matches!(m, ModelKind::LlmNoPersonalization | ModelKind::LlmPersonalized));
    let profiles = if needs_profiles {
        load_profiles(STAGE, settings, &corpus)?
    } else {
        BTreeMap::new()
    };
    let strategies = if models.contains(&ModelKind::LlmPersonalized) {
        let path = require(STAGE, "strategy store", work_file(settings, STRATEGY_STORE), "strategize")?;
        cached_strategies(&corpus, &profiles, &StrategyStore::open(&path).stage(STAGE)?)
    } else {
        BTreeMap::new()
    };
    let prompts = prompts(STAGE, settings)?;
    let provider = provider(STAGE, settings)?;
    let spec = ExperimentSpec {
        cutoffs: args.cutoffs.clone().or_else(|| file.cutoffs.clone()).unwrap_or(DEFAULT_CUTOFFS.to_vec()),
        runs: args.runs.or(file.runs).unwrap_or(5),
        models,
        seed: settings.seed,
        max_in_flight: settings.max_in_flight,
        ..ExperimentSpec::default()
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let inputs = ExperimentInputs {
        corpus: &corpus,
        profiles: &profiles,
        strategies: &strategies,
        template: &prompts.rerank,
    };
    let records = rerank_all(inputs, &spec, provider.as_ref()).stage(STAGE)?;
    let path = work_file(settings, RERANK_STORE);
    jsonl::write(&path, &records).stage(STAGE)?;
    let failures = records
        .iter()
        .filter(|r| r.repair_log.iter().any(|a| matches!(a, gamerank_core::rerank::RepairAction::ProviderFailure { .. })))
        .count();
    let mut warnings = Vec::new();
    if failures > 0 {
        warnings.push(format!("{failures} reranks fell back to the baseline order after provider failures"));
    }
    Ok(Output {
        stdout: format!(
            "rerank: {} lists ({} runs x {} models x {} users) in {}",
            records.len(),
            spec.runs,
            spec.models.len(),
            corpus.rankings().len(),
            path.display()
        ),
        warnings,
    })
}

pub fn eval(settings: &Settings, args: &EvalArgs, file: &FileConfig) -> Result<Output, CliError> {
    const STAGE: &str = "eval";
    let corpus = load(STAGE, settings)?;
    let path = require(STAGE, "rerank store", work_file(settings, RERANK_STORE), "rerank")?;
    let records: Vec<RerankRecord> = jsonl::read(&path).stage(STAGE)?;
    if let Some(r) = records.iter().find(|r| corpus.ranking(r.user_id.as_str()).is_none()) {
        return Err(CliError::data(STAGE, format!("rerank store names unknown user {}", r.user_id)));
    }
    let longest = records.iter().map(|r| r.items.len()).max().unwrap_or(0);
    let cutoffs = match args.cutoffs.clone().or_else(|| file.cutoffs.clone()) {
        Some(c) => c,
        None => DEFAULT_CUTOFFS.into_iter().filter(|&k| k <= longest.max(DEFAULT_CUTOFFS[0])).collect(),
    };
    let mapping = args.relevance.or(file.relevance).map(Into::into).unwrap_or_default();
    let cap = args.relevance_cap.or(file.relevance_cap).unwrap_or(RelevanceParams::default().cap);
    let relevance = RelevanceParams::new(mapping, cap).map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = ExperimentSpec {
        cutoffs,
        relevance,
        ..ExperimentSpec::default()
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = evaluate(&corpus, &records, &spec).stage(STAGE)?;
    write_file(&work_file(settings, EVAL_CELLS), &report.to_jsonl())?;
    let rendered = report.render_table();
    write_file(&work_file(settings, REPORT_FILE), &rendered.text)?;
    Ok(Output {
        stdout: rendered.text,
        warnings: rendered.warnings,
    })
}

pub fn report(settings: &Settings, args: &ReportArgs) -> Result<Output, CliError> {
    const STAGE: &str = "report";
    let cells_path = require(STAGE, "eval cells", work_file(settings, EVAL_CELLS), "eval")?;
    let cells: Vec<EvalCell> = jsonl::read(&cells_path).stage(STAGE)?;
    let report = EvalReport::new(cells);
    if args.format == ReportFormat::Machine {
        return Ok(Output::line(report.to_jsonl().trim_end()));
    }
    let rendered = report.render_table();
    write_file(&work_file(settings, REPORT_FILE), &rendered.text)?;

    let mut warnings = rendered.warnings;
    let rerank_path = work_file(settings, RERANK_STORE);
    if rerank_path.is_file() {
        let corpus = load(STAGE, settings)?;
        let records: Vec<RerankRecord> = jsonl::read(&rerank_path).stage(STAGE)?;
        let k = records.iter().map(|r| r.items.len()).max().unwrap_or(0);
        write_file(&work_file(settings, CURVE_FILE), &curve_csv(&corpus, &records, k))?;
    } else {
        warnings.push(format!("no rerank store at {}; curve not written", rerank_path.display()));
    }
    Ok(Output {
        stdout: rendered.text,
        warnings,
    })
}
