//! Aggregation of in-game text and random downsampling under a token budget.
//!
//! The sampling unit is a whole [`TextElement`]. Elements are visited in a
//! seeded random order and kept whenever the aggregate still fits; the kept
//! set is returned in its original order. Noise elements are not filtered.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::data::TextElement;
use crate::rng;

/// Default prompt budget for the sampled in-game text.
pub const DEFAULT_MAX_PROMPT_TOKENS: usize = 6000;

/// A token-count policy. Swap in a provider-exact tokenizer by implementing this.
pub trait TokenEstimator: Send + Sync {
    fn id(&self) -> &str;
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(chars / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarterCharEstimator;

impl TokenEstimator for QuarterCharEstimator {
    fn id(&self) -> &str {
        "chars_div_4"
    }

    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

/// Default-policy token estimate.
pub fn estimate_tokens(text: &str) -> usize {
    QuarterCharEstimator.estimate(text)
}

#[derive(Clone)]
pub struct TokenBudget {
    max_tokens: usize,
    estimator: Arc<dyn TokenEstimator>,
}

impl TokenBudget {
    /// Budget with the default estimator. Returns `None` for a zero budget.
    pub fn new(max_tokens: usize) -> Option<Self> {
        Self::with_estimator(max_tokens, Arc::new(QuarterCharEstimator))
    }

    pub fn with_estimator(max_tokens: usize, estimator: Arc<dyn TokenEstimator>) -> Option<Self> {
        (max_tokens >= 1).then_some(Self {
            max_tokens,
            estimator,
        })
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn estimator(&self) -> &dyn TokenEstimator {
        self.estimator.as_ref()
    }

    fn fits(&self, text: &str) -> bool {
        self.estimator.estimate(text) <= self.max_tokens
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_PROMPT_TOKENS).expect("nonzero default")
    }
}

impl fmt::Debug for TokenBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenBudget")
            .field("max_tokens", &self.max_tokens)
            .field("estimator", &self.estimator.id())
            .finish()
    }
}

/// Joins element contents with `\n`, in order.
pub fn aggregate(elements: &[TextElement]) -> String {
    let mut out = String::new();
    for (i, e) in elements.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&e.content);
    }
    out
}

/// Seeded subset of `elements` whose aggregate fits `budget`, in input order.
pub fn sample_under_budget(
    elements: &[TextElement],
    budget: &TokenBudget,
    seed: u64,
) -> Vec<TextElement> {
    if budget.fits(&aggregate(elements)) {
        return elements.to_vec();
    }

    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.shuffle(&mut rng::stream(seed, &["sample_under_budget"]));

    let mut chosen: Vec<usize> = Vec::new();
    for &idx in &order {
        let mut trial = chosen.clone();
        let at = trial.partition_point(|&i| i < idx);
        trial.insert(at, idx);
        let text = aggregate(&trial.iter().map(|&i| elements[i].clone()).collect::<Vec<_>>());
        if budget.fits(&text) {
            chosen = trial;
        }
    }

    if chosen.is_empty() {
        // every element is individually oversize: keep a truncated first draw
        return order
            .first()
            .map(|&i| vec![truncate_to_budget(&elements[i], budget)])
            .unwrap_or_default();
    }
    chosen.into_iter().map(|i| elements[i].clone()).collect()
}

/// Longest character prefix of the element that fits the budget.
fn truncate_to_budget(element: &TextElement, budget: &TokenBudget) -> TextElement {
    let chars: Vec<(usize, char)> = element.content.char_indices().collect();
    let prefix = |n: usize| -> &str {
        let end = chars.get(n).map_or(element.content.len(), |&(b, _)| b);
        &element.content[..end]
    };
    // largest n with prefix(n) fitting; estimators are monotone in length
    let (mut lo, mut hi) = (0usize, chars.len());
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if budget.fits(prefix(mid)) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    TextElement::new(prefix(lo), element.kind)
}
