//! Top-K reranking: the identity baseline, three non-personalized LLM
//! variants and the personalized reranker, plus repair of model output into
//! an exact permutation of the candidates.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, GameId, GameProfile, UserId};
use crate::prompts::{slot, PromptTemplate};
use crate::provider::{CompletionProvider, CompletionRequest, ProviderError};
use crate::rng;
use crate::strategy::UserStrategy;

/// Largest slice handed to a reranker.
pub const MAX_RERANK_K: usize = 30;

pub const CANDIDATE_BLOCK_START: &str = "<Candidate Game Info Start>";
pub const CANDIDATE_BLOCK_END: &str = "<Candidate Game Info End>";
/// First line of every candidate entry.
pub const CANDIDATE_ID_PREFIX: &str = "game_id: ";

/// Strategy text used by every non-personalized model.
pub const GENERIC_STRATEGY: &str = "Rank the games by their general relevance and overall appeal, using only the information provided for each game. Prefer games with clear objectives, engaging core mechanics, and content suitable for a broad audience.";

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("invalid rerank request: {0}")]
    InvalidRequest(String),
    #[error("missing {representation} for: {}", ids.join(", "))]
    MissingRepresentation {
        representation: Representation,
        ids: Vec<String>,
    },
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Title,
    TitleDesc,
    Profile,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Title => "title",
            Self::TitleDesc => "title_desc",
            Self::Profile => "profile",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankRequest {
    pub user_id: UserId,
    pub candidates: Vec<GameId>,
    pub representation: Representation,
    pub strategy: Option<UserStrategy>,
}

impl RerankRequest {
    pub fn validate(&self) -> Result<(), RerankError> {
        if self.candidates.len() > MAX_RERANK_K {
            return Err(RerankError::InvalidRequest(format!(
                "{} candidates exceeds {MAX_RERANK_K}",
                self.candidates.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.candidates.iter().find(|c| !seen.insert(*c)) {
            return Err(RerankError::InvalidRequest(format!("duplicate candidate {dup}")));
        }
        Ok(())
    }
}

/// One deterministic edit applied while turning model output into a permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    DroppedUnknown { token: String },
    DroppedDuplicate { id: GameId },
    AppendedMissing { id: GameId },
    FallbackIdentity,
    FallbackNonPersonalized,
    ProviderFailure { detail: String },
    /// Candidate data needed for the prompt was missing; identity order kept.
    MissingRepresentation { ids: Vec<String> },
}

impl RepairAction {
    /// True for actions that repair model output, as opposed to fallbacks.
    pub fn is_output_repair(&self) -> bool {
        matches!(
            self,
            Self::DroppedUnknown { .. }
                | Self::DroppedDuplicate { .. }
                | Self::AppendedMissing { .. }
                | Self::FallbackIdentity
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankedList {
    pub user_id: UserId,
    pub items: Vec<GameId>,
    pub repair_log: Vec<RepairAction>,
}

/// Parsed and repaired model output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairedRanking {
    pub items: Vec<GameId>,
    pub repair_log: Vec<RepairAction>,
}

fn is_list_marker(token: &str) -> bool {
    let digits = token.trim_end_matches(['.', ')', ':']);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}

/// Extracts candidate ids in order of first appearance, then repairs:
/// unknown tokens are dropped, repeats are dropped, and absent candidates
/// are appended in their original order. Output with no usable id falls
/// back to the original order.
pub fn parse_rerank_output(raw: &str, candidates: &[GameId]) -> RepairedRanking {
    let known: HashSet<&str> = candidates.iter().map(GameId::as_str).collect();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut items: Vec<GameId> = Vec::with_capacity(candidates.len());
    let mut log = Vec::new();

    let tokens = raw
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '[' | ']' | '"' | '\'' | '`' | '{' | '}'))
        .filter(|t| !t.is_empty());
    for token in tokens {
        let resolved = if known.contains(token) {
            Some(token)
        } else {
            let trimmed = token.trim_matches(['.', ':', '(', ')', '*', '-']);
            known.contains(trimmed).then_some(trimmed)
        };
        match resolved {
            Some(id) => {
                let id = *known.get(id).expect("known");
                if seen.insert(id) {
                    items.push(GameId::new(id).expect("candidate ids are valid"));
                } else {
                    log.push(RepairAction::DroppedDuplicate {
                        id: GameId::new(id).expect("candidate ids are valid"),
                    });
                }
            }
            None if is_list_marker(token) => {}
            None => log.push(RepairAction::DroppedUnknown {
                token: token.to_string(),
            }),
        }
    }

    if items.is_empty() {
        log.push(RepairAction::FallbackIdentity);
        return RepairedRanking {
            items: candidates.to_vec(),
            repair_log: log,
        };
    }
    for c in candidates {
        if !seen.contains(c.as_str()) {
            items.push(c.clone());
            log.push(RepairAction::AppendedMissing { id: c.clone() });
        }
    }
    RepairedRanking { items, repair_log: log }
}

/// Game metadata the prompt builder draws candidate representations from.
#[derive(Debug, Clone, Copy)]
pub struct RerankData<'a> {
    pub corpus: &'a Corpus,
    pub profiles: &'a BTreeMap<GameId, GameProfile>,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn candidate_block(request: &RerankRequest, data: RerankData<'_>) -> Result<String, RerankError> {
    let mut missing = Vec::new();
    let mut entries = Vec::with_capacity(request.candidates.len());
    for id in &request.candidates {
        let game = data.corpus.game(id.as_str());
        let entry = match (request.representation, game) {
            (Representation::Title, Some(g)) => {
                format!("{CANDIDATE_ID_PREFIX}{id}\ntitle: {}", one_line(&g.title))
            }
            (Representation::TitleDesc, Some(g)) => format!(
                "{CANDIDATE_ID_PREFIX}{id}\ntitle: {}\ndescription: {}",
                one_line(&g.title),
                one_line(&g.description)
            ),
            (Representation::Profile, _) => match data.profiles.get(id) {
                Some(p) => format!("{CANDIDATE_ID_PREFIX}{id}\ngame_profile: {}", p.to_json()),
                None => {
                    missing.push(id.to_string());
                    continue;
                }
            },
            (_, None) => {
                missing.push(id.to_string());
                continue;
            }
        };
        entries.push(entry);
    }
    if !missing.is_empty() {
        return Err(RerankError::MissingRepresentation {
            representation: request.representation,
            ids: missing,
        });
    }
    Ok(entries.join("\n\n"))
}

/// Renders the rerank prompt. Without a strategy the generic strategy text
/// fills the user slot.
pub fn build_rerank_prompt(
    template: &PromptTemplate,
    request: &RerankRequest,
    data: RerankData<'_>,
) -> Result<String, RerankError> {
    request.validate()?;
    let block = candidate_block(request, data)?;
    let strategy = request
        .strategy
        .as_ref()
        .map_or(GENERIC_STRATEGY, |s| s.strategy_text.as_str());
    let k = request.candidates.len().to_string();
    Ok(template.render(&[
        (slot::USER_PROFILE, strategy),
        (slot::RANKING_LENGTH, &k),
        (slot::RANKING_RESULTS, &block),
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BaselineIdentity,
    Title,
    TitleDesc,
    LlmNoPersonalization,
    LlmPersonalized,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        Self::BaselineIdentity,
        Self::Title,
        Self::TitleDesc,
        Self::LlmNoPersonalization,
        Self::LlmPersonalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BaselineIdentity => "baseline_identity",
            Self::Title => "title",
            Self::TitleDesc => "title_desc",
            Self::LlmNoPersonalization => "llm_no_personalization",
            Self::LlmPersonalized => "llm_personalized",
        }
    }

    /// Report column heading.
    pub fn column(self) -> &'static str {
        match self {
            Self::BaselineIdentity => "Baseline",
            Self::Title => "Title-based",
            Self::TitleDesc => "Title+Desc",
            Self::LlmNoPersonalization => "LLM w/o Pers.",
            Self::LlmPersonalized => "Proposed",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = RerankError;

    fn from_str(s: &str) -> Result<Self, RerankError> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RerankError::UnknownKind(s.to_string()))
    }
}

/// A configured reranker. Immutable and shareable across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RerankModel {
    kind: ModelKind,
}

/// Builds the reranker for `kind`.
pub fn make_model(kind: ModelKind) -> RerankModel {
    RerankModel { kind }
}

impl RerankModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Candidate representation, or `None` for the identity baseline.
    pub fn representation(&self) -> Option<Representation> {
        match self.kind {
            ModelKind::BaselineIdentity => None,
            ModelKind::Title => Some(Representation::Title),
            ModelKind::TitleDesc => Some(Representation::TitleDesc),
            ModelKind::LlmNoPersonalization | ModelKind::LlmPersonalized => Some(Representation::Profile),
        }
    }

    pub fn is_personalized(&self) -> bool {
        self.kind == ModelKind::LlmPersonalized
    }

    /// Reranks `candidates` for `user`. The personalized model falls back to
    /// the generic strategy (logged) when `strategy` is `None`.
    #[allow(clippy::too_many_arguments)]
    pub fn rerank(
        &self,
        user: &UserId,
        candidates: &[GameId],
        strategy: Option<&UserStrategy>,
        data: RerankData<'_>,
        template: &PromptTemplate,
        provider: &dyn CompletionProvider,
        seed: u64,
    ) -> Result<RerankedList, RerankError> {
        let Some(representation) = self.representation() else {
            return Ok(RerankedList {
                user_id: user.clone(),
                items: candidates.to_vec(),
                repair_log: Vec::new(),
            });
        };
        let mut log = Vec::new();
        let strategy = if self.is_personalized() {
            if strategy.is_none() {
                log.push(RepairAction::FallbackNonPersonalized);
            }
            strategy.cloned()
        } else {
            None
        };
        let request = RerankRequest {
            user_id: user.clone(),
            candidates: candidates.to_vec(),
            representation,
            strategy,
        };
        let prompt = build_rerank_prompt(template, &request, data)?;
        let completion = CompletionRequest::new(
            prompt,
            rng::derive_seed(seed, &["rerank", self.kind.as_str(), user.as_str()]),
        );
        let raw = provider.complete(&completion)?;
        let repaired = parse_rerank_output(&raw, candidates);
        log.extend(repaired.repair_log);
        Ok(RerankedList {
            user_id: user.clone(),
            items: repaired.items,
            repair_log: log,
        })
    }
}
