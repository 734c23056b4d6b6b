//! Impulse clipping, normalization, smoothing and differencing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothMethod {
    Mean,
    Median,
}

/// Centered rolling smoother; `window` must be odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SmoothKind {
    pub method: SmoothMethod,
    pub window: usize,
}

impl SmoothKind {
    pub fn new(method: SmoothMethod, window: usize) -> Result<Self> {
        let kind = Self { method, window };
        kind.validate()?;
        Ok(kind)
    }

    pub fn identity() -> Self {
        Self {
            method: SmoothMethod::Mean,
            window: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::param(
                "smoother.window",
                format!("must be a positive odd integer, got {}", self.window),
            ));
        }
        Ok(())
    }
}

/// Clamps values into `[0.99 * p1, 1.01 * p99]`.
///
/// For negative percentiles the multipliers would swap roles, so the bounds
/// are widened to `max(1.01 p99, p99)` and `min(0.99 p1, p1)`.
pub fn clip_impulses(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let sorted = stats::sorted_copy(values);
    let p99 = stats::percentile_sorted(&sorted, 99.0);
    let p1 = stats::percentile_sorted(&sorted, 1.0);
    let upper = (1.01 * p99).max(p99);
    let lower = (0.99 * p1).min(p1);
    values.iter().map(|&v| v.max(lower).min(upper)).collect()
}

/// Clamps values into `[p1 - 0.01 r, p99 + 0.01 r]` with `r = p99 - p1`.
///
/// Same percentiles as [`clip_impulses`], but the 1 % margin is taken from the
/// spread instead of the level, so clipping commutes with adding a constant
/// and with positive scaling. The feature extractors use this form.
pub fn clip_impulses_relative(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let sorted = stats::sorted_copy(values);
    let p99 = stats::percentile_sorted(&sorted, 99.0);
    let p1 = stats::percentile_sorted(&sorted, 1.0);
    let margin = 0.01 * (p99 - p1);
    let (lower, upper) = (p1 - margin, p99 + margin);
    values.iter().map(|&v| v.max(lower).min(upper)).collect()
}

/// Scales into `[0, 1]`. A constant input maps to all zeros.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / range).collect()
}

/// Centered rolling mean or median. Windows shrink at the edges so the output
/// has the input's length.
pub fn smooth(values: &[f64], how: SmoothKind) -> Result<Vec<f64>> {
    how.validate()?;
    let n = values.len();
    if how.window > n {
        return Err(Error::param(
            "smoother.window",
            format!("window {} exceeds series length {n}", how.window),
        ));
    }
    if how.window == 1 {
        return Ok(values.to_vec());
    }
    let half = how.window / 2;
    let mut out = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(how.window);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let w = &values[lo..hi];
        let v = match how.method {
            SmoothMethod::Mean => w.iter().sum::<f64>() / w.len() as f64,
            SmoothMethod::Median => {
                scratch.clear();
                scratch.extend_from_slice(w);
                scratch.sort_unstable_by(f64::total_cmp);
                stats::percentile_sorted(&scratch, 50.0)
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// `D[k] = x[k+1] - x[k]`, optionally in absolute value.
pub fn first_diff(values: &[f64], absolute: bool) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "first difference needs at least 2 points, got {}",
            values.len()
        )));
    }
    Ok(values
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if absolute {
                d.abs()
            } else {
                d
            }
        })
        .collect())
}
