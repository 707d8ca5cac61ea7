//! NDCG Engagement, history-length cohorts, the multi-run experiment driver
//! and report rendering.

mod experiment;
mod metric;
mod report;
mod segment;

pub use experiment::{
    curve_csv, evaluate, position_engagement_curve, rerank_all, run_experiment, ExperimentInputs, ExperimentSpec,
    RerankRecord, DEFAULT_CUTOFFS,
};
pub use metric::{dcg, ndcg_engagement, ndcg_from_rels, relevance, RelevanceMapping, RelevanceParams};
pub use report::{
    format_improvement, improvement_percent, EvalCell, EvalReport, RenderedTable, SegmentKey, TOTAL_LABEL,
};
pub use segment::{segment_users, validate_bands, Band, DEFAULT_BANDS};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("no rerank records to evaluate")]
    NoRecords,
}
