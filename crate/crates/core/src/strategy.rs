//! Per-user ranking strategy from a profiled play history.
//!
//! Each history entry becomes `game_<n>: <profile json> | sessions: .. |
//! playtime_seconds: ..`; raw game ids never reach the prompt. One completion
//! produces the combined user-profile-and-strategy text.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Corpus, GameId, GameProfile, PlayHistory, UserId};
use crate::jsonl::{self, JsonlError};
use crate::prompts::{slot, PromptTemplate};
use crate::provider::{CompletionProvider, CompletionRequest, ProviderError};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("empty_context: no history entry of {0} has a profile")]
    EmptyContext(UserId),
    #[error("provider failed for {user_id}: {source}")]
    Provider {
        user_id: UserId,
        #[source]
        source: ProviderError,
    },
    #[error("empty_completion for {0}")]
    EmptyCompletion(UserId),
    #[error("{failed} of {total} users failed strategy generation ({:.2}% > {:.2}% threshold)", 100.0 * *rate, 100.0 * *threshold)]
    BatchFailed {
        failed: usize,
        total: usize,
        rate: f64,
        threshold: f64,
    },
    #[error(transparent)]
    Store(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStrategy {
    pub user_id: UserId,
    pub strategy_text: String,
    pub source_history_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryContext {
    pub text: String,
    /// Number of history entries rendered (those with a profile).
    pub entries: usize,
    /// History games without a profile, in history order.
    pub skipped: Vec<GameId>,
}

impl HistoryContext {
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn build_history_context(
    history: &PlayHistory,
    profiles: &BTreeMap<GameId, GameProfile>,
) -> Result<HistoryContext, StrategyError> {
    let mut lines = Vec::with_capacity(history.entries.len());
    let mut skipped = Vec::new();
    for entry in &history.entries {
        match profiles.get(&entry.game_id) {
            Some(p) => lines.push(format!(
                "game_{}: {} | sessions: {} | playtime_seconds: {}",
                lines.len() + 1,
                p.to_json(),
                entry.sessions,
                entry.playtime_seconds
            )),
            None => {
                tracing::warn!(user = %history.user_id, game = %entry.game_id, "history game has no profile, skipped");
                skipped.push(entry.game_id.clone());
            }
        }
    }
    if lines.is_empty() {
        return Err(StrategyError::EmptyContext(history.user_id.clone()));
    }
    Ok(HistoryContext {
        entries: lines.len(),
        text: lines.join("\n"),
        skipped,
    })
}

/// Replaces whole-token occurrences of known game ids with `[game]`.
pub fn redact_game_ids(text: &str, is_game_id: impl Fn(&str) -> bool) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut redacted = 0;
    let mut rest = text;
    while !rest.is_empty() {
        let ws = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
        out.push_str(&rest[..ws]);
        rest = &rest[ws..];
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let chunk = &rest[..end];
        let core = chunk.trim_matches(|c: char| !(c.is_alphanumeric() || c == '_'));
        if !core.is_empty() && is_game_id(core) {
            let lead = chunk.find(core).unwrap_or(0);
            out.push_str(&chunk[..lead]);
            out.push_str("[game]");
            out.push_str(&chunk[lead + core.len()..]);
            redacted += 1;
        } else {
            out.push_str(chunk);
        }
        rest = &rest[end..];
    }
    (out, redacted)
}

/// Renders the strategy prompt for a built context.
pub fn build_strategy_prompt(template: &PromptTemplate, context: &HistoryContext) -> String {
    template.render(&[(slot::USER_PLAY_HISTORY, &context.text)])
}

pub fn generate_strategy(
    corpus: &Corpus,
    history: &PlayHistory,
    profiles: &BTreeMap<GameId, GameProfile>,
    template: &PromptTemplate,
    provider: &dyn CompletionProvider,
    seed: u64,
) -> Result<UserStrategy, StrategyError> {
    let context = build_history_context(history, profiles)?;
    let prompt = build_strategy_prompt(template, &context);
    let request = CompletionRequest::new(prompt, rng::derive_seed(seed, &["strategy", history.user_id.as_str()]));
    let raw = provider.complete(&request).map_err(|source| StrategyError::Provider {
        user_id: history.user_id.clone(),
        source,
    })?;
    let (text, redacted) = redact_game_ids(raw.trim(), |t| corpus.game(t).is_some());
    if redacted > 0 {
        tracing::warn!(user = %history.user_id, redacted, "game ids removed from strategy text");
    }
    if text.is_empty() {
        return Err(StrategyError::EmptyCompletion(history.user_id.clone()));
    }
    Ok(UserStrategy {
        user_id: history.user_id.clone(),
        strategy_text: text,
        source_history_length: history.history_length(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredStrategy {
    pub user_id: UserId,
    pub fingerprint: String,
    pub strategy_text: String,
}

/// Append-only strategy cache keyed by user and history fingerprint.
#[derive(Debug)]
pub struct StrategyStore {
    path: PathBuf,
    latest: HashMap<UserId, StoredStrategy>,
}

impl StrategyStore {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let entries: Vec<StoredStrategy> = jsonl::read_if_exists(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            latest: entries.into_iter().map(|e| (e.user_id.clone(), e)).collect(),
        })
    }

    pub fn get(&self, user: &UserId, fingerprint: &str) -> Option<&str> {
        self.latest
            .get(user)
            .filter(|e| e.fingerprint == fingerprint)
            .map(|e| e.strategy_text.as_str())
    }

    pub fn append(&mut self, records: Vec<StoredStrategy>) -> Result<(), JsonlError> {
        jsonl::append(&self.path, &records)?;
        for r in records {
            self.latest.insert(r.user_id.clone(), r);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }
}

/// Strategies already in `store` whose fingerprint matches the user's
/// current profiled history. Never calls a provider.
pub fn cached_strategies(
    corpus: &Corpus,
    profiles: &BTreeMap<GameId, GameProfile>,
    store: &StrategyStore,
) -> BTreeMap<UserId, UserStrategy> {
    corpus
        .histories()
        .iter()
        .filter_map(|h| {
            let context = build_history_context(h, profiles).ok()?;
            let text = store.get(&h.user_id, &context.fingerprint())?;
            Some((
                h.user_id.clone(),
                UserStrategy {
                    user_id: h.user_id.clone(),
                    strategy_text: text.to_string(),
                    source_history_length: h.history_length(),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StrategyOptions {
    pub seed: u64,
    pub max_in_flight: usize,
    pub failure_threshold: f64,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_in_flight: 8,
            failure_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StrategyBatch {
    pub strategies: BTreeMap<UserId, UserStrategy>,
    /// Users left without a strategy, with the reason.
    pub skipped: Vec<(UserId, String)>,
    pub cache_hits: usize,
    pub generated: usize,
}

/// Strategies for every user with a history that has at least one profiled game.
pub fn strategize_users(
    corpus: &Corpus,
    profiles: &BTreeMap<GameId, GameProfile>,
    template: &PromptTemplate,
    provider: &dyn CompletionProvider,
    store: &mut StrategyStore,
    options: &StrategyOptions,
) -> Result<StrategyBatch, StrategyError> {
    let mut batch = StrategyBatch::default();
    let mut todo: Vec<(&PlayHistory, String)> = Vec::new();
    for user in corpus.user_ids() {
        let Some(history) = corpus.history(user.as_str()) else {
            batch.skipped.push((user, "no history".into()));
            continue;
        };
        let context = match build_history_context(history, profiles) {
            Ok(c) => c,
            Err(e) => {
                batch.skipped.push((user, e.to_string()));
                continue;
            }
        };
        let fp = context.fingerprint();
        match store.get(&user, &fp) {
            Some(text) => {
                batch.cache_hits += 1;
                batch.strategies.insert(
                    user.clone(),
                    UserStrategy {
                        user_id: user,
                        strategy_text: text.to_string(),
                        source_history_length: history.history_length(),
                    },
                );
            }
            None => todo.push((history, fp)),
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<UserStrategy, StrategyError>> = pool.install(|| {
        todo.par_iter()
            .map(|(h, _)| generate_strategy(corpus, h, profiles, template, provider, options.seed))
            .collect()
    });

    let mut fresh = Vec::new();
    let attempted = todo.len();
    let mut failed = 0;
    for ((history, fp), result) in todo.into_iter().zip(results) {
        match result {
            Ok(s) => {
                batch.generated += 1;
                fresh.push(StoredStrategy {
                    user_id: s.user_id.clone(),
                    fingerprint: fp,
                    strategy_text: s.strategy_text.clone(),
                });
                batch.strategies.insert(s.user_id.clone(), s);
            }
            Err(e) => {
                failed += 1;
                batch.skipped.push((history.user_id.clone(), e.to_string()));
            }
        }
    }
    store.append(fresh)?;

    let total = attempted + batch.cache_hits;
    let rate = if total == 0 { 0.0 } else { failed as f64 / total as f64 };
    if rate > options.failure_threshold {
        return Err(StrategyError::BatchFailed {
            failed,
            total,
            rate,
            threshold: options.failure_threshold,
        });
    }
    batch.skipped.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(batch)
}
