//! Multi-run reranking experiment and its aggregation into report cells.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::{ndcg_engagement, RelevanceParams};
use super::report::{EvalCell, EvalReport, SegmentKey};
use super::segment::{segment_users, validate_bands, Band, DEFAULT_BANDS};
use super::EvalError;
use crate::data::{Corpus, GameId, GameProfile, UserId};
use crate::prompts::PromptTemplate;
use crate::provider::CompletionProvider;
use crate::rerank::{make_model, ModelKind, RepairAction, RerankData, RerankError, MAX_RERANK_K};
use crate::strategy::UserStrategy;

pub const DEFAULT_CUTOFFS: [usize; 3] = [10, 20, 30];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub cutoffs: Vec<usize>,
    pub bands: Vec<Band>,
    pub runs: usize,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub relevance: RelevanceParams,
    pub max_in_flight: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            bands: DEFAULT_BANDS.to_vec(),
            runs: 5,
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            relevance: RelevanceParams::default(),
            max_in_flight: 8,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.runs == 0 {
            return Err(EvalError::InvalidSpec("runs must be at least 1".into()));
        }
        if self.cutoffs.is_empty() || self.cutoffs.iter().any(|&k| k == 0 || k > MAX_RERANK_K) {
            return Err(EvalError::InvalidSpec(format!(
                "cutoffs must be nonempty and within 1..={MAX_RERANK_K}, got {:?}",
                self.cutoffs
            )));
        }
        if self.models.is_empty() {
            return Err(EvalError::InvalidSpec("no models selected".into()));
        }
        validate_bands(&self.bands)
    }

    /// Length of the slice handed to every reranker.
    pub fn slice_len(&self) -> usize {
        self.cutoffs.iter().copied().max().unwrap_or(MAX_RERANK_K)
    }

    /// Seed of run `r` (1-based).
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

/// One reranked list as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankRecord {
    pub user_id: UserId,
    pub model: ModelKind,
    pub run: usize,
    pub run_seed: u64,
    pub items: Vec<GameId>,
    pub repair_log: Vec<RepairAction>,
}

/// Inputs every reranker draws on.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentInputs<'a> {
    pub corpus: &'a Corpus,
    pub profiles: &'a BTreeMap<GameId, GameProfile>,
    pub strategies: &'a BTreeMap<UserId, UserStrategy>,
    pub template: &'a PromptTemplate,
}

/// Reranks the top slice of every ranked user for every run and model.
/// Records come back ordered by run, then model, then user. Per-user
/// failures keep the baseline order and are recorded in the repair log.
pub fn rerank_all(
    inputs: ExperimentInputs<'_>,
    spec: &ExperimentSpec,
    provider: &dyn CompletionProvider,
) -> Result<Vec<RerankRecord>, EvalError> {
    spec.validate()?;
    let k = spec.slice_len();
    let data = RerankData {
        corpus: inputs.corpus,
        profiles: inputs.profiles,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.max_in_flight.max(1))
        .build()
        .expect("thread pool");

    let mut out = Vec::new();
    for run in 1..=spec.runs {
        let run_seed = spec.run_seed(run);
        for &kind in &spec.models {
            let model = make_model(kind);
            let lists: Vec<RerankRecord> = pool.install(|| {
                inputs
                    .corpus
                    .rankings()
                    .par_iter()
                    .map(|ranking| {
                        let candidates = ranking.top_k(k);
                        let strategy = inputs.strategies.get(&ranking.user_id);
                        let (items, repair_log) = match model.rerank(
                            &ranking.user_id,
                            candidates,
                            strategy,
                            data,
                            inputs.template,
                            provider,
                            run_seed,
                        ) {
                            Ok(list) => (list.items, list.repair_log),
                            Err(e) => {
                                tracing::warn!(user = %ranking.user_id, model = %kind, run, error = %e, "rerank failed, keeping baseline order");
                                let action = match e {
                                    RerankError::MissingRepresentation { ids, .. } => {
                                        RepairAction::MissingRepresentation { ids }
                                    }
                                    other => RepairAction::ProviderFailure {
                                        detail: other.to_string(),
                                    },
                                };
                                (candidates.to_vec(), vec![action])
                            }
                        };
                        RerankRecord {
                            user_id: ranking.user_id.clone(),
                            model: kind,
                            run,
                            run_seed,
                            items,
                            repair_log,
                        }
                    })
                    .collect()
            });
            let mut lists = lists;
            lists.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            out.extend(lists);
        }
    }
    Ok(out)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Scores stored rerank records and aggregates them into report cells.
///
/// Per (run, model, segment, cutoff) the NDCG is averaged over the segment's
/// users; those per-run means are then averaged over runs. The total row is
/// the mean of the segment means.
pub fn evaluate(corpus: &Corpus, records: &[RerankRecord], spec: &ExperimentSpec) -> Result<EvalReport, EvalError> {
    validate_bands(&spec.bands)?;
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }

    let mut users: Vec<UserId> = records.iter().map(|r| r.user_id.clone()).collect();
    users.sort();
    users.dedup();
    let with_len: Vec<(UserId, usize)> = users
        .iter()
        .map(|u| (u.clone(), corpus.history_length(u.as_str())))
        .collect();
    let segments = segment_users(&with_len, &spec.bands)?;
    let segment_of: HashMap<&UserId, usize> = segments
        .iter()
        .enumerate()
        .flat_map(|(i, members)| members.iter().map(move |u| (u, i)))
        .collect();

    let mut cells = Vec::new();
    for (band, members) in spec.bands.iter().zip(&segments) {
        let lengths: Vec<f64> = members.iter().map(|u| corpus.history_length(u.as_str()) as f64).collect();
        cells.push(EvalCell::Segment {
            segment: SegmentKey::Band(band.label()),
            users: members.len(),
            mean_history_length: mean(&lengths).unwrap_or(0.0),
        });
    }

    let mut models: Vec<ModelKind> = records.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    let runs = records.iter().map(|r| r.run).max().unwrap_or(0);

    // (model, cutoff, run, segment) -> per-user ndcgs
    let mut scores: BTreeMap<(ModelKind, usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        let seg = segment_of[&r.user_id];
        for &k in &spec.cutoffs {
            let n = ndcg_engagement(&r.items, |g| corpus.playtime(&r.user_id, g), &spec.relevance, k);
            scores.entry((r.model, k, r.run, seg)).or_default().push(n);
        }
    }

    let mut means: BTreeMap<(ModelKind, usize, SegmentKey), f64> = BTreeMap::new();
    for &model in &models {
        for &k in &spec.cutoffs {
            let mut seg_means = Vec::new();
            for (seg, band) in spec.bands.iter().enumerate() {
                let per_run: Vec<f64> = (1..=runs)
                    .filter_map(|run| scores.get(&(model, k, run, seg)).and_then(|v| mean(v)))
                    .collect();
                let Some(m) = mean(&per_run) else { continue };
                seg_means.push(m);
                let key = SegmentKey::Band(band.label());
                means.insert((model, k, key.clone()), m);
                cells.push(EvalCell::Ndcg {
                    segment: key,
                    cutoff: k,
                    model,
                    mean: m,
                    per_run,
                });
            }
            if seg_means.len() == spec.bands.len() {
                let m = mean(&seg_means).expect("nonempty");
                means.insert((model, k, SegmentKey::Total), m);
                cells.push(EvalCell::Ndcg {
                    segment: SegmentKey::Total,
                    cutoff: k,
                    model,
                    mean: m,
                    per_run: Vec::new(),
                });
            }
        }
    }

    for &k in &spec.cutoffs {
        let keys = spec
            .bands
            .iter()
            .map(|b| SegmentKey::Band(b.label()))
            .chain([SegmentKey::Total]);
        for key in keys {
            let base = means.get(&(ModelKind::BaselineIdentity, k, key.clone()));
            let proposed = means.get(&(ModelKind::LlmPersonalized, k, key.clone()));
            if let (Some(&b), Some(&p)) = (base, proposed) {
                if let Some(percent) = super::report::improvement_percent(b, p) {
                    cells.push(EvalCell::Improvement {
                        segment: key,
                        cutoff: k,
                        percent,
                    });
                }
            }
        }
    }

    for &model in &models {
        let of_model: Vec<&RerankRecord> = records.iter().filter(|r| r.model == model).collect();
        let repaired = of_model
            .iter()
            .filter(|r| r.repair_log.iter().any(RepairAction::is_output_repair))
            .count();
        let count = |f: fn(&RepairAction) -> bool| of_model.iter().flat_map(|r| &r.repair_log).filter(|a| f(a)).count();
        cells.push(EvalCell::Repair {
            model,
            lists: of_model.len(),
            repaired_lists: repaired,
            actions: of_model.iter().map(|r| r.repair_log.len()).sum(),
            provider_failures: count(|a| matches!(a, RepairAction::ProviderFailure { .. })),
            non_personalized_fallbacks: count(|a| matches!(a, RepairAction::FallbackNonPersonalized)),
            rate: if of_model.is_empty() {
                0.0
            } else {
                repaired as f64 / of_model.len() as f64
            },
        });
    }

    Ok(EvalReport::new(cells))
}

/// Reranks and evaluates in one step.
pub fn run_experiment(
    inputs: ExperimentInputs<'_>,
    spec: &ExperimentSpec,
    provider: &dyn CompletionProvider,
) -> Result<(Vec<RerankRecord>, EvalReport), EvalError> {
    let records = rerank_all(inputs, spec, provider)?;
    let report = evaluate(inputs.corpus, &records, spec)?;
    Ok((records, report))
}

/// Mean post-exposure playtime at each rank position `1..=k` across lists.
/// Positions past the end of a list are not counted for that list.
pub fn position_engagement_curve<'a>(
    lists: impl IntoIterator<Item = (&'a UserId, &'a [GameId])>,
    playtime: impl Fn(&UserId, &GameId) -> f64,
    k: usize,
) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (user, items) in lists {
        for (i, g) in items.iter().take(k).enumerate() {
            sums[i] += playtime(user, g);
            counts[i] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Curves for every model in `records`, pooled over runs, as CSV with header
/// `position,mean_seconds,model`.
pub fn curve_csv(corpus: &Corpus, records: &[RerankRecord], k: usize) -> String {
    let mut models: Vec<ModelKind> = records.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    let mut out = String::from("position,mean_seconds,model\n");
    for model in models {
        let curve = position_engagement_curve(
            records
                .iter()
                .filter(|r| r.model == model)
                .map(|r| (&r.user_id, r.items.as_slice())),
            |u, g| corpus.playtime(u, g),
            k,
        );
        for (i, v) in curve.iter().enumerate() {
            out.push_str(&format!("{},{v:.6},{model}\n", i + 1));
        }
    }
    out
}
