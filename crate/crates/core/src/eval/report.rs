//! Report cells and their text-table rendering.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rerank::ModelKind;

/// Row key: one percentile band or the total-average row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum SegmentKey {
    Band(String),
    Total,
}

pub const TOTAL_LABEL: &str = "Total Avg.";

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Band(label) => f.write_str(label),
            Self::Total => f.write_str(TOTAL_LABEL),
        }
    }
}

impl From<SegmentKey> for String {
    fn from(k: SegmentKey) -> String {
        k.to_string()
    }
}

impl From<String> for SegmentKey {
    fn from(s: String) -> Self {
        if s == TOTAL_LABEL {
            Self::Total
        } else {
            Self::Band(s)
        }
    }
}

/// One machine-readable report cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalCell {
    Segment {
        segment: SegmentKey,
        users: usize,
        mean_history_length: f64,
    },
    Ndcg {
        segment: SegmentKey,
        cutoff: usize,
        model: ModelKind,
        mean: f64,
        /// Per-run segment means; empty for the total row.
        per_run: Vec<f64>,
    },
    Improvement {
        segment: SegmentKey,
        cutoff: usize,
        percent: f64,
    },
    Repair {
        model: ModelKind,
        lists: usize,
        /// Lists whose model output needed at least one repair.
        repaired_lists: usize,
        actions: usize,
        provider_failures: usize,
        non_personalized_fallbacks: usize,
        rate: f64,
    },
}

/// `100 (proposed - baseline) / baseline`, or `None` for a zero baseline.
pub fn improvement_percent(baseline: f64, proposed: f64) -> Option<f64> {
    (baseline > 0.0 && baseline.is_finite() && proposed.is_finite()).then(|| 100.0 * (proposed - baseline) / baseline)
}

/// Two-decimal percentage, e.g. `4.90%`; never renders `-0.00%`.
pub fn format_improvement(percent: f64) -> String {
    let s = format!("{percent:.2}");
    if s == "-0.00" {
        "0.00%".to_string()
    } else {
        format!("{s}%")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    cells: Vec<EvalCell>,
}

/// Rendered table plus notes about gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn new(cells: Vec<EvalCell>) -> Self {
        Self { cells }
    }

    pub fn cells(&self) -> &[EvalCell] {
        &self.cells
    }

    pub fn ndcg(&self, segment: &SegmentKey, cutoff: usize, model: ModelKind) -> Option<f64> {
        self.cells.iter().find_map(|c| match c {
            EvalCell::Ndcg { segment: s, cutoff: k, model: m, mean, .. }
                if s == segment && *k == cutoff && *m == model =>
            {
                Some(*mean)
            }
            _ => None,
        })
    }

    pub fn improvement(&self, segment: &SegmentKey, cutoff: usize) -> Option<f64> {
        self.cells.iter().find_map(|c| match c {
            EvalCell::Improvement { segment: s, cutoff: k, percent } if s == segment && *k == cutoff => Some(*percent),
            _ => None,
        })
    }

    fn models(&self) -> Vec<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .filter(|m| self.cells.iter().any(|c| matches!(c, EvalCell::Ndcg { model, .. } if model == m)))
            .collect()
    }

    fn cutoffs(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self
            .cells
            .iter()
            .filter_map(|c| match c {
                EvalCell::Ndcg { cutoff, .. } | EvalCell::Improvement { cutoff, .. } => Some(*cutoff),
                _ => None,
            })
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    /// Band rows in order of first appearance, then the total row.
    fn segments(&self) -> Vec<SegmentKey> {
        let mut out: Vec<SegmentKey> = Vec::new();
        for c in &self.cells {
            let s = match c {
                EvalCell::Segment { segment, .. }
                | EvalCell::Ndcg { segment, .. }
                | EvalCell::Improvement { segment, .. } => segment,
                EvalCell::Repair { .. } => continue,
            };
            if matches!(s, SegmentKey::Band(_)) && !out.contains(s) {
                out.push(s.clone());
            }
        }
        out.push(SegmentKey::Total);
        out
    }

    /// Aligned text table: one block per cutoff, one row per segment, one
    /// column per model, best and second-best values annotated per row (tied
    /// values share the annotation), and the improvement of the personalized
    /// model over the baseline. Missing values render as `-` and are listed
    /// in the warnings.
    pub fn render_table(&self) -> RenderedTable {
        let models = self.models();
        let with_improvement = models.contains(&ModelKind::BaselineIdentity) && models.contains(&ModelKind::LlmPersonalized);
        let mut header: Vec<String> = vec!["Metric".into(), "Segment".into()];
        header.extend(models.iter().map(|m| m.column().to_string()));
        if with_improvement {
            header.push("Improvement".into());
        }

        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut warnings = Vec::new();
        for k in self.cutoffs() {
            for (i, seg) in self.segments().into_iter().enumerate() {
                let metric = if i == 0 { format!("NDCG@{k}") } else { String::new() };
                let values: Vec<Option<f64>> = models.iter().map(|&m| self.ndcg(&seg, k, m)).collect();
                let mut distinct: Vec<f64> = values.iter().flatten().copied().collect();
                distinct.sort_by(|a, b| b.total_cmp(a));
                distinct.dedup();
                let marked = values.iter().flatten().count() > 1;
                let mut row = vec![metric, seg.to_string()];
                for (j, v) in values.iter().enumerate() {
                    row.push(match v {
                        None => {
                            warnings.push(format!("no NDCG@{k} value for {} in segment {seg}", models[j].as_str()));
                            "-".into()
                        }
                        Some(v) if marked && distinct.first() == Some(v) => format!("{v:.6} (best)"),
                        Some(v) if marked && distinct.get(1) == Some(v) => format!("{v:.6} (2nd)"),
                        Some(v) => format!("{v:.6}"),
                    });
                }
                if with_improvement {
                    row.push(self.improvement(&seg, k).map_or_else(|| "-".into(), format_improvement));
                }
                rows.push(row);
            }
        }

        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut text = line(&header);
        text.push('\n');
        text.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        text.push('\n');
        for r in &rows {
            text.push_str(&line(r));
            text.push('\n');
        }

        let repairs: Vec<&EvalCell> = self.cells.iter().filter(|c| matches!(c, EvalCell::Repair { .. })).collect();
        if !repairs.is_empty() {
            text.push_str("\nRepair statistics\n");
            for c in repairs {
                if let EvalCell::Repair { model, lists, repaired_lists, actions, provider_failures, non_personalized_fallbacks, rate } = c {
                    text.push_str(&format!(
                        "{:<24} lists={lists} repaired={repaired_lists} ({:.2}%) actions={actions} provider_failures={provider_failures} fallback_non_personalized={non_personalized_fallbacks}\n",
                        model.as_str(),
                        100.0 * rate
                    ));
                }
            }
        }
        RenderedTable { text, warnings }
    }

    /// One JSON object per cell, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.cells
            .iter()
            .map(|c| serde_json::to_string(c).expect("cells serialize") + "\n")
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ndcg(seg: &str, k: usize, model: ModelKind, mean: f64) -> EvalCell {
        EvalCell::Ndcg {
            segment: seg.to_string().into(),
            cutoff: k,
            model,
            mean,
            per_run: vec![],
        }
    }

    #[test]
    fn improvement_rendering() {
        assert_eq!(format_improvement(improvement_percent(0.148159, 0.155426).unwrap()), "4.90%");
        assert_eq!(format_improvement(-0.001), "0.00%");
        assert_eq!(improvement_percent(0.0, 0.1), None);
    }

    #[test]
    fn segment_key_round_trips_as_label() {
        let json = serde_json::to_string(&SegmentKey::Total).unwrap();
        assert_eq!(json, "\"Total Avg.\"");
        assert_eq!(serde_json::from_str::<SegmentKey>("\"0-30\"").unwrap(), SegmentKey::Band("0-30".into()));
    }

    #[test]
    fn table_marks_best_and_second_and_gaps() {
        let report = EvalReport::new(vec![
            ndcg("0-30", 10, ModelKind::BaselineIdentity, 0.1),
            ndcg("0-30", 10, ModelKind::Title, 0.3),
            ndcg("0-30", 10, ModelKind::LlmPersonalized, 0.2),
            ndcg("30-70", 10, ModelKind::BaselineIdentity, 0.1),
            ndcg(TOTAL_LABEL, 10, ModelKind::BaselineIdentity, 0.1),
            EvalCell::Improvement { segment: "0-30".to_string().into(), cutoff: 10, percent: 100.0 },
        ]);
        let t = report.render_table();
        let row = t.text.lines().find(|l| l.starts_with("NDCG@10")).unwrap();
        assert!(row.contains("0.300000 (best)") && row.contains("0.200000 (2nd)") && row.ends_with("100.00%"));
        assert!(t.text.contains("Total Avg."));
        assert!(t.text.lines().any(|l| l.contains("30-70") && l.contains(" -")));
        assert!(t.warnings.iter().any(|w| w.contains("30-70")));
    }

    #[test]
    fn tied_values_share_markers() {
        let report = EvalReport::new(vec![
            ndcg("0-30", 10, ModelKind::BaselineIdentity, 0.5),
            ndcg("0-30", 10, ModelKind::Title, 0.5),
            ndcg("0-30", 10, ModelKind::LlmPersonalized, 0.4),
        ]);
        let text = report.render_table().text;
        assert_eq!(text.matches("0.500000 (best)").count(), 2);
        assert!(text.contains("0.400000 (2nd)"));
    }

    #[test]
    fn cells_round_trip_through_jsonl() {
        let report = EvalReport::new(vec![
            ndcg("0-30", 10, ModelKind::Title, 0.25),
            EvalCell::Repair {
                model: ModelKind::Title,
                lists: 2,
                repaired_lists: 1,
                actions: 3,
                provider_failures: 0,
                non_personalized_fallbacks: 0,
                rate: 0.5,
            },
        ]);
        let back: Vec<EvalCell> = report.to_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, report.cells());
        assert!(report.to_jsonl().starts_with("{\"kind\":\"ndcg\""));
    }
}
