//! The three windowed feature extractors behind the cluster tree.
//!
//! * **section sign**: per window, the mean sign of deviations from the
//!   window's center value, left half then right half. Separates series with a
//!   recurring trend from those without.
//! * **swing**: per window of first differences of the clipped, min-max
//!   normalized series, the 80th minus the 20th percentile. Measures amplitude.
//! * **diff-thres**: per window of absolute first differences of the raw
//!   series, the number of adjacent pairs straddling `max / div`, for each
//!   attenuation coefficient `div`. Measures impulse density.
//!
//! Window `j` covers `[j * s, j * s + m)`; trailing samples that do not fill a
//! whole window are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{clip_impulses_relative, first_diff, minmax_normalize};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Window length in points.
    pub m: usize,
    /// Stride in points.
    pub s: usize,
}

impl WindowSpec {
    pub const SECTION_SIGN: WindowSpec = WindowSpec { m: 90, s: 30 };
    pub const SWING: WindowSpec = WindowSpec { m: 90, s: 30 };
    pub const DIFF_THRES: WindowSpec = WindowSpec { m: 180, s: 30 };

    /// Number of full windows over a sequence of `len` points.
    pub fn count(&self, len: usize) -> usize {
        if len < self.m || self.s == 0 {
            0
        } else {
            (len - self.m) / self.s + 1
        }
    }

    fn check(&self, len: usize, what: &str) -> Result<()> {
        if self.m < 2 || self.s < 1 {
            return Err(Error::param(
                what,
                format!("window needs m >= 2 and s >= 1, got m={} s={}", self.m, self.s),
            ));
        }
        if self.m > len {
            return Err(Error::InsufficientData(format!(
                "{what}: window length {} exceeds available {len} points",
                self.m
            )));
        }
        Ok(())
    }

    fn windows<'a>(&self, values: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (m, s) = (self.m, self.s);
        (0..self.count(values.len())).map(move |j| &values[j * s..j * s + m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    SectionSign,
    Swing,
    DiffThres,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which adjacent pairs of a window the crossing counter inspects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingRule {
    /// Non-overlapping pairs `(0,1), (2,3), ...`.
    #[default]
    Stride2,
    /// Every adjacent pair `(k-1, k)`.
    EveryPair,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Section-sign feature of length `2h`, `h = floor((l - m) / s) + 1`.
/// The series is clipped with [`clip_impulses_relative`] first.
pub fn section_sign(values: &[f64], w: WindowSpec) -> Result<FeatureVector> {
    w.check(values.len(), "section_sign")?;
    let clipped = clip_impulses_relative(values);
    let m = w.m;
    let half = m / 2;
    let mut out = Vec::with_capacity(2 * w.count(values.len()));
    for win in w.windows(&clipped) {
        let center = if m % 2 == 1 {
            win[half]
        } else {
            (win[half - 1] + win[half]) / 2.0
        };
        let left: f64 = win[..half].iter().map(|&v| sign(v - center)).sum();
        let right: f64 = win[m - half..].iter().map(|&v| sign(v - center)).sum();
        out.push(left / half as f64);
        out.push(right / half as f64);
    }
    Ok(FeatureVector {
        kind: FeatureKind::SectionSign,
        values: out,
    })
}

/// Swing feature of length `floor((l - 1 - m) / s) + 1`.
pub fn swing(values: &[f64], w: WindowSpec) -> Result<FeatureVector> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("swing needs at least 2 points".into()));
    }
    w.check(values.len() - 1, "swing")?;
    let d = first_diff(&minmax_normalize(&clip_impulses_relative(values)), false)?;
    let mut scratch = Vec::with_capacity(w.m);
    let out = w
        .windows(&d)
        .map(|win| {
            scratch.clear();
            scratch.extend_from_slice(win);
            scratch.sort_unstable_by(f64::total_cmp);
            stats::percentile_sorted(&scratch, 80.0) - stats::percentile_sorted(&scratch, 20.0)
        })
        .collect();
    Ok(FeatureVector {
        kind: FeatureKind::Swing,
        values: out,
    })
}

/// Counts pairs where `threshold` lies strictly between the two values.
pub fn count_crossings(window: &[f64], threshold: f64, rule: CrossingRule) -> u32 {
    let step = match rule {
        CrossingRule::Stride2 => 2,
        CrossingRule::EveryPair => 1,
    };
    (1..window.len())
        .step_by(step)
        .filter(|&k| {
            let (a, b) = (window[k - 1], window[k]);
            (a < threshold && threshold < b) || (b < threshold && threshold < a)
        })
        .count() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffThresConfig {
    pub window: WindowSpec,
    pub divs: Vec<f64>,
    pub rule: CrossingRule,
}

impl Default for DiffThresConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::DIFF_THRES,
            divs: vec![2.0, 3.0, 4.0],
            rule: CrossingRule::Stride2,
        }
    }
}

/// Diff-thres output: raw per-window counts (grouped by `div`, in `divs`
/// order) and their min-max normalized form used for clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffThres {
    pub counts: Vec<u32>,
    pub features: FeatureVector,
}

pub fn diff_thres(values: &[f64], cfg: &DiffThresConfig) -> Result<DiffThres> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("diff_thres needs at least 2 points".into()));
    }
    if cfg.divs.is_empty() || cfg.divs.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::param("divs", "need at least one positive divisor"));
    }
    cfg.window.check(values.len() - 1, "diff_thres")?;
    let d = first_diff(values, true)?;
    let maxima: Vec<f64> = cfg
        .window
        .windows(&d)
        .map(|win| win.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut counts = Vec::with_capacity(cfg.divs.len() * maxima.len());
    for &div in &cfg.divs {
        for (win, &max) in cfg.window.windows(&d).zip(&maxima) {
            counts.push(count_crossings(win, max / div, cfg.rule));
        }
    }
    let as_f64: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
    Ok(DiffThres {
        counts,
        features: FeatureVector {
            kind: FeatureKind::DiffThres,
            values: minmax_normalize(&as_f64),
        },
    })
}

/// Window settings for all three extractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub section_sign: WindowSpec,
    pub swing: WindowSpec,
    pub diff_thres: DiffThresConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            section_sign: WindowSpec::SECTION_SIGN,
            swing: WindowSpec::SWING,
            diff_thres: DiffThresConfig::default(),
        }
    }
}

/// Every feature of one series, as consumed by the cluster tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFeatures {
    pub section_sign: FeatureVector,
    pub swing: FeatureVector,
    pub diff_thres: DiffThres,
}

impl FeatureConfig {
    pub fn extract(&self, values: &[f64]) -> Result<SeriesFeatures> {
        Ok(SeriesFeatures {
            section_sign: section_sign(values, self.section_sign)?,
            swing: swing(values, self.swing)?,
            diff_thres: diff_thres(values, &self.diff_thres)?,
        })
    }

    /// Smallest series length every extractor accepts.
    pub fn min_length(&self) -> usize {
        self.section_sign
            .m
            .max(self.swing.m + 1)
            .max(self.diff_thres.window.m + 1)
    }

    /// Feature lengths `(section_sign, swing, diff_thres)` for series length `l`.
    pub fn lengths(&self, l: usize) -> (usize, usize, usize) {
        (
            2 * self.section_sign.count(l),
            self.swing.count(l.saturating_sub(1)),
            self.diff_thres.divs.len() * self.diff_thres.window.count(l.saturating_sub(1)),
        )
    }
}
