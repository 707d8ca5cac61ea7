//! Playtime-graded relevance and NDCG Engagement.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::GameId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceMapping {
    /// `min(cap, log2(1 + minutes))`.
    #[default]
    LogMinutes,
    /// Seconds passed through unchanged. Gains overflow quickly; meant for
    /// small hand-built cases only.
    RawSeconds,
    /// 1 for any positive playtime.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceParams {
    pub mapping: RelevanceMapping,
    pub cap: f64,
}

impl Default for RelevanceParams {
    fn default() -> Self {
        Self {
            mapping: RelevanceMapping::LogMinutes,
            cap: 10.0,
        }
    }
}

impl RelevanceParams {
    pub fn new(mapping: RelevanceMapping, cap: f64) -> Result<Self, EvalError> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(EvalError::InvalidSpec(format!("relevance cap must be positive, got {cap}")));
        }
        Ok(Self { mapping, cap })
    }
}

/// Relevance grade of an item the user played for `playtime_seconds`.
pub fn relevance(playtime_seconds: f64, params: &RelevanceParams) -> f64 {
    let s = playtime_seconds.max(0.0);
    match params.mapping {
        RelevanceMapping::LogMinutes => (1.0 + s / 60.0).log2().min(params.cap),
        RelevanceMapping::RawSeconds => s,
        RelevanceMapping::Binary => {
            if s > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// `sum_{i=1..min(p,n)} (2^rel_i - 1) / log2(i + 1)`.
pub fn dcg(rels: &[f64], cutoff: usize) -> f64 {
    rels.iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &r)| (r.exp2() - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Normalized DCG of `rels` at `cutoff`; the ideal ordering is the same
/// grades sorted nonincreasing (stable). Zero when the ideal DCG is zero.
pub fn ndcg_from_rels(rels: &[f64], cutoff: usize) -> f64 {
    let mut ideal = rels.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let z = dcg(&ideal, cutoff);
    if z <= 0.0 {
        return 0.0;
    }
    (dcg(rels, cutoff) / z).clamp(0.0, 1.0)
}

/// NDCG Engagement of `ranked` at `cutoff`, with relevance derived from the
/// post-exposure playtime returned by `playtime`.
pub fn ndcg_engagement(
    ranked: &[GameId],
    playtime: impl Fn(&GameId) -> f64,
    params: &RelevanceParams,
    cutoff: usize,
) -> f64 {
    let rels: Vec<f64> = ranked.iter().map(|g| relevance(playtime(g), params)).collect();
    ndcg_from_rels(&rels, cutoff.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relevance_closed_forms() {
        let p = RelevanceParams::default();
        assert_eq!(relevance(0.0, &p), 0.0);
        assert_eq!(relevance(60.0, &p), 1.0);
        assert_eq!(relevance(1860.0, &p), 5.0);
        assert_eq!(relevance(1e12, &p), 10.0);
        for mapping in [RelevanceMapping::Binary, RelevanceMapping::RawSeconds] {
            assert_eq!(relevance(0.0, &RelevanceParams { mapping, cap: 10.0 }), 0.0);
        }
        assert!(RelevanceParams::new(RelevanceMapping::Binary, 0.0).is_err());
    }

    #[test]
    fn worked_example() {
        let n = ndcg_from_rels(&[1.0, 0.0, 2.0], 3);
        let expected = 2.5 / (3.0 + 1.0 / 3f64.log2());
        assert!((n - expected).abs() < 1e-15);
        assert!((n - 0.68853).abs() < 1e-5);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(ndcg_from_rels(&[0.0, 0.0], 2), 0.0);
        assert_eq!(ndcg_from_rels(&[], 3), 0.0);
        assert_eq!(ndcg_from_rels(&[3.0, 2.0, 2.0, 0.0], 4), 1.0);
    }

    /// Textbook binary NDCG: gain 1 per relevant hit, ideal puts all hits first.
    fn textbook_binary(hits: &[bool], k: usize) -> f64 {
        let disc = |i: usize| 1.0 / ((i + 2) as f64).log2();
        let dcg: f64 = hits.iter().take(k).enumerate().filter(|(_, h)| **h).map(|(i, _)| disc(i)).sum();
        let n_rel = hits.iter().filter(|h| **h).count().min(k);
        let idcg: f64 = (0..n_rel).map(disc).sum();
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }

    proptest! {
        #[test]
        fn binary_mapping_is_classical_ndcg(secs in proptest::collection::vec(prop_oneof![Just(0.0), 1.0..1e5f64], 0..15), k in 1usize..15) {
            let ids: Vec<GameId> = (0..secs.len()).map(|i| GameId::new(format!("g{i}")).unwrap()).collect();
            let params = RelevanceParams { mapping: RelevanceMapping::Binary, cap: 10.0 };
            let got = ndcg_engagement(&ids, |g| secs[ids.iter().position(|x| x == g).unwrap()], &params, k);
            let hits: Vec<bool> = secs.iter().map(|s| *s > 0.0).collect();
            prop_assert!((got - textbook_binary(&hits, k)).abs() < 1e-12);
        }

        #[test]
        fn bounded(rels in proptest::collection::vec(0.0..10.0f64, 0..40), k in 1usize..40) {
            let n = ndcg_from_rels(&rels, k);
            prop_assert!((0.0..=1.0).contains(&n));
        }
    }
}
