//! Offline pipeline that turns in-game text into structured game profiles,
//! reranks recommendation lists with a personalized LLM strategy, and scores
//! the result with a playtime-graded NDCG.
//!
//! Stages, in pipeline order:
//!
//! - [`data`]: corpus types, line-delimited loading and integrity checks.
//! - [`sampler`]: aggregation and token-budgeted random sampling of in-game text.
//! - [`provider`]: completion abstraction (remote HTTP client, deterministic mocks).
//! - [`profile`]: game profile prompt, parsing and the fingerprint-keyed store.
//! - [`strategy`]: per-user history context and ranking strategy generation.
//! - [`rerank`]: the five reranking models and permutation repair.
//! - [`eval`]: NDCG Engagement, cohorting, the multi-run driver and reports.
//! - [`synth`]: seeded synthetic corpus with ground truth.

pub mod data;
pub mod eval;
pub mod jsonl;
pub mod profile;
pub mod prompts;
pub mod provider;
pub mod rerank;
pub mod rng;
pub mod sampler;
pub mod strategy;
pub mod synth;
pub mod text;

pub use data::{
    Corpus, DataError, EngagementLabel, GameId, GameProfile, GameRecord, HistoryEntry,
    PlayHistory, RankingList, TextElement, TextKind, UserId, ValidationReport,
};
pub use provider::{CompletionProvider, CompletionRequest, ProviderError, ProviderErrorClass};
