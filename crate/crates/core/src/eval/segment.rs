//! Percentile cohorts by history length.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::UserId;

/// Percentile band `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Label such as `0-30`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }

    fn contains(&self, pct: f64) -> bool {
        self.lo < pct && pct <= self.hi
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub const DEFAULT_BANDS: [Band; 3] = [Band::new(0.0, 30.0), Band::new(30.0, 70.0), Band::new(70.0, 100.0)];

/// Checks that `bands` are contiguous, increasing and cover `(0, 100]`.
pub fn validate_bands(bands: &[Band]) -> Result<(), EvalError> {
    let invalid = |why: &str| Err(EvalError::InvalidSpec(format!("bands must partition (0,100]: {why}")));
    let (Some(first), Some(last)) = (bands.first(), bands.last()) else {
        return invalid("no bands");
    };
    if first.lo != 0.0 || last.hi != 100.0 {
        return invalid("must start at 0 and end at 100");
    }
    for b in bands {
        if b.lo >= b.hi {
            return invalid(&format!("empty band {b}"));
        }
    }
    if bands.windows(2).any(|w| w[0].hi != w[1].lo) {
        return invalid("bands are not contiguous");
    }
    Ok(())
}

/// Assigns each user to a band by nearest-rank percentile of history length.
///
/// Users are ordered by length, then id. The user at ascending rank `r` of
/// `n` falls in `(lo, hi]` iff `lo < 100 r / n <= hi`. The result lists the
/// members of each band in rank order, one entry per band.
pub fn segment_users(users: &[(UserId, usize)], bands: &[Band]) -> Result<Vec<Vec<UserId>>, EvalError> {
    validate_bands(bands)?;
    let mut sorted: Vec<&(UserId, usize)> = users.iter().collect();
    sorted.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let n = sorted.len();
    let mut out = vec![Vec::new(); bands.len()];
    for (i, (user, _)) in sorted.into_iter().enumerate() {
        let pct = (100 * (i + 1)) as f64 / n as f64;
        let band = bands.iter().position(|b| b.contains(pct)).expect("bands cover (0,100]");
        out[band].push(user.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::uid;
    use proptest::prelude::*;

    #[test]
    fn ten_users_split_three_four_three() {
        let users: Vec<_> = (1..=10).map(|l| (uid(&format!("u{l:02}")), l)).collect();
        let seg = segment_users(&users, &DEFAULT_BANDS).unwrap();
        let sizes: Vec<_> = seg.iter().map(Vec::len).collect();
        assert_eq!(sizes, [3, 4, 3]);
        assert_eq!(seg[0], [uid("u01"), uid("u02"), uid("u03")]);
    }

    #[test]
    fn ties_break_by_id() {
        let users: Vec<_> = ["d", "a", "c", "b", "j", "e", "g", "f", "i", "h"]
            .iter()
            .map(|s| (uid(s), 5))
            .collect();
        let seg = segment_users(&users, &DEFAULT_BANDS).unwrap();
        assert_eq!(seg[0], [uid("a"), uid("b"), uid("c")]);
        assert_eq!(seg.iter().map(Vec::len).collect::<Vec<_>>(), [3, 4, 3]);
    }

    #[test]
    fn bad_bands_rejected() {
        let users = [(uid("a"), 1)];
        assert!(segment_users(&users, &[Band::new(0.0, 50.0)]).is_err());
        assert!(segment_users(&users, &[Band::new(0.0, 40.0), Band::new(50.0, 100.0)]).is_err());
        assert!(segment_users(&users, &[]).is_err());
    }

    proptest! {
        #[test]
        fn partition(lengths in proptest::collection::vec(0usize..60, 0..200)) {
            let users: Vec<_> = lengths.iter().enumerate().map(|(i, l)| (uid(&format!("u{i}")), *l)).collect();
            let seg = segment_users(&users, &DEFAULT_BANDS).unwrap();
            let mut all: Vec<UserId> = seg.concat();
            prop_assert_eq!(all.len(), users.len());
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), users.len());
        }
    }
}
