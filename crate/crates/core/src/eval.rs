//! Scoring: per-level clustering precision/recall/F1 and the detection pass
//! rate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{AnomalyLabels, ClusterCode};

pub const LEVEL_NAMES: [&str; 3] = ["section_sign", "swing", "diff_thres"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Metrics for one tree level, with each state in turn as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    #[serde(rename = "T")]
    pub t: Prf,
    #[serde(rename = "F")]
    pub f: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub samples: usize,
    pub section_sign: LevelMetrics,
    pub swing: LevelMetrics,
    pub diff_thres: LevelMetrics,
    /// `confusion[truth][predicted]`, indexed by [`ClusterCode::index`].
    pub confusion: [[usize; 8]; 8],
}

impl ClusteringReport {
    pub fn levels(&self) -> [&LevelMetrics; 3] {
        [&self.section_sign, &self.swing, &self.diff_thres]
    }

    /// Smallest F1 over all levels and both states.
    pub fn min_f1(&self) -> f64 {
        self.levels()
            .iter()
            .flat_map(|l| [l.t.f1, l.f.f1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Aligned text table: one row per level and state, then the confusion
    /// matrix.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14}{:<7}{:>10}{:>10}{:>10}", "level", "state", "precision", "recall", "f1");
        for (name, level) in LEVEL_NAMES.iter().zip(self.levels()) {
            for (state, m) in [("T", level.t), ("F", level.f)] {
                let _ = writeln!(
                    out,
                    "{:<14}{:<7}{:>10.4}{:>10.4}{:>10.4}",
                    name, state, m.precision, m.recall, m.f1
                );
            }
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<12}", "truth\\pred");
        for c in ClusterCode::all() {
            let _ = write!(out, "{:>6}", c.to_string());
        }
        let _ = writeln!(out);
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{:<12}", ClusterCode::from_index(i).to_string());
            for n in row {
                let _ = write!(out, "{n:>6}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

fn level_metrics(predicted: &[ClusterCode], truth: &[ClusterCode], level: usize) -> LevelMetrics {
    let mut counts = [[0usize; 2]; 2]; // [truth][pred]
    for (p, t) in predicted.iter().zip(truth) {
        counts[usize::from(t.bits()[level])][usize::from(p.bits()[level])] += 1;
    }
    let prf = |pos: usize| {
        let neg = 1 - pos;
        Prf::from_counts(counts[pos][pos], counts[neg][pos], counts[pos][neg])
    };
    LevelMetrics { t: prf(1), f: prf(0) }
}

pub fn clustering_report(predicted: &[ClusterCode], truth: &[ClusterCode]) -> Result<ClusteringReport> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut confusion = [[0usize; 8]; 8];
    for (p, t) in predicted.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    Ok(ClusteringReport {
        samples: truth.len(),
        section_sign: level_metrics(predicted, truth, 0),
        swing: level_metrics(predicted, truth, 1),
        diff_thres: level_metrics(predicted, truth, 2),
        confusion,
    })
}

/// A series passes when every segment has a flag fewer than `delay_tolerance`
/// points after its start and no flag falls outside all segments.
pub fn series_passes(flags: &[usize], labels: &AnomalyLabels, delay_tolerance: usize) -> bool {
    if flags.iter().any(|&i| !labels.covers(i)) {
        return false;
    }
    labels.segments().iter().all(|seg| {
        flags
            .iter()
            .any(|&i| seg.contains(i) && i - seg.start < delay_tolerance)
    })
}

pub fn pass_rate(pass_count: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InsufficientData("pass rate over zero series".into()));
    }
    if pass_count > total {
        return Err(Error::param(
            "pass_count",
            format!("{pass_count} exceeds the total {total}"),
        ));
    }
    Ok(pass_count as f64 / total as f64)
}
