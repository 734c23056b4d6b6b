//! Configurable detection pipeline: optional min-max normalization, a
//! smoother, then a set of detectors whose flags are unioned.
//!
//! Detector order is part of the configuration (and of the evolvable genome)
//! but does not change the result: each detector sees the same preprocessed
//! series and the outputs are combined by set union.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{first_diff, minmax_normalize, smooth, SmoothKind};
use crate::stats;

/// Floor added to robust and local scale estimates.
pub const SCALE_FLOOR: f64 = 1e-9;

const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    GlobalThreshold,
    DynamicThreshold,
    LocalSteep,
    GlobalSteep,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::GlobalThreshold,
        Detector::DynamicThreshold,
        Detector::LocalSteep,
        Detector::GlobalSteep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Detector::GlobalThreshold => "global_threshold",
            Detector::DynamicThreshold => "dynamic_threshold",
            Detector::LocalSteep => "local_steep",
            Detector::GlobalSteep => "global_steep",
        }
    }

    pub fn run(self, values: &[f64], p: &DetectorParams) -> Vec<usize> {
        match self {
            Detector::GlobalThreshold => global_threshold(values, p),
            Detector::DynamicThreshold => dynamic_threshold(values, p),
            Detector::LocalSteep => local_steep(values, p),
            Detector::GlobalSteep => global_steep(values, p),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::param("detector", format!("unknown detector {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Threshold multiplier, in `[0.5, 10]`.
    pub sensitivity: f64,
    /// Trailing context for `local_steep`, in points.
    pub window: usize,
    /// Season length for `dynamic_threshold`, in points.
    pub period: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            sensitivity: 3.0,
            window: 60,
            period: 1440,
        }
    }
}

pub const SENSITIVITY_RANGE: (f64, f64) = (0.5, 10.0);
pub const WINDOW_RANGE: (usize, usize) = (3, 360);

impl DetectorParams {
    fn validate(&self, d: Detector) -> Result<()> {
        let name = |field: &str| format!("params.{d}.{field}");
        let (lo, hi) = SENSITIVITY_RANGE;
        if !(lo..=hi).contains(&self.sensitivity) {
            return Err(Error::param(
                name("sensitivity"),
                format!("{} outside [{lo}, {hi}]", self.sensitivity),
            ));
        }
        let (lo, hi) = WINDOW_RANGE;
        if !(lo..=hi).contains(&self.window) {
            return Err(Error::param(name("window"), format!("{} outside [{lo}, {hi}]", self.window)));
        }
        if self.period < 2 {
            return Err(Error::param(name("period"), "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub normalize: bool,
    pub smoother: SmoothKind,
    /// Distinct detectors in execution order.
    pub detectors: Vec<Detector>,
    pub params: BTreeMap<Detector, DetectorParams>,
}

impl PipelineConfig {
    /// Length-independent checks.
    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        if self.detectors.is_empty() {
            return Err(Error::param("detectors", "at least one detector is required"));
        }
        let mut seen = BTreeSet::new();
        for &d in &self.detectors {
            if !seen.insert(d) {
                return Err(Error::param("detectors", format!("{d} listed twice")));
            }
            self.params
                .get(&d)
                .ok_or_else(|| Error::param(format!("params.{d}"), "missing"))?
                .validate(d)?;
        }
        Ok(())
    }

    /// Checks the configuration against a concrete series length.
    pub fn validate_for_length(&self, len: usize) -> Result<()> {
        self.validate()?;
        if len < 2 {
            return Err(Error::InsufficientData(format!(
                "detection needs at least 2 points, got {len}"
            )));
        }
        if self.smoother.window > len {
            return Err(Error::param(
                "smoother.window",
                format!("{} exceeds series length {len}", self.smoother.window),
            ));
        }
        for &d in &self.detectors {
            let p = &self.params[&d];
            if p.window > len {
                return Err(Error::param(
                    format!("params.{d}.window"),
                    format!("{} exceeds series length {len}", p.window),
                ));
            }
            if d == Detector::DynamicThreshold && 2 * p.period > len {
                return Err(Error::param(
                    format!("params.{d}.period"),
                    format!("twice the period ({}) exceeds series length {len}", 2 * p.period),
                ));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = crate::io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Sorted union of all detector outputs.
    pub anomalous_indices: Vec<usize>,
    pub per_detector: BTreeMap<Detector, Vec<usize>>,
}

impl DetectionResult {
    /// CSV with one `index,detector` row per contribution, sorted by index.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(usize, Detector)> = self
            .per_detector
            .iter()
            .flat_map(|(&d, idx)| idx.iter().map(move |&i| (i, d)))
            .collect();
        rows.sort_unstable();
        let mut out = String::from("index,detector\n");
        for (i, d) in rows {
            let _ = writeln!(out, "{i},{d}");
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_csv())
    }
}

/// Runs the pipeline on one series.
pub fn run_pipeline(config: &PipelineConfig, series: &[f64]) -> Result<DetectionResult> {
    config.validate_for_length(series.len())?;
    let normalized;
    let input = if config.normalize {
        normalized = minmax_normalize(series);
        &normalized[..]
    } else {
        series
    };
    let processed = smooth(input, config.smoother)?;
    let mut per_detector = BTreeMap::new();
    let mut all = BTreeSet::new();
    for &d in &config.detectors {
        let flagged = d.run(&processed, &config.params[&d]);
        all.extend(flagged.iter().copied());
        per_detector.insert(d, flagged);
    }
    Ok(DetectionResult {
        anomalous_indices: all.into_iter().collect(),
        per_detector,
    })
}

/// Flags `|x - mean| > sensitivity * std` over the whole series. A zero
/// standard deviation flags nothing.
pub fn global_threshold(values: &[f64], p: &DetectorParams) -> Vec<usize> {
    let mu = stats::mean(values);
    let sd = stats::std_dev(values);
    if sd == 0.0 {
        return Vec::new();
    }
    let limit = p.sensitivity * sd;
    (0..values.len()).filter(|&i| (values[i] - mu).abs() > limit).collect()
}

/// Compares each point with the same phase of every earlier period:
/// flags `|x - median(H)| > sensitivity * (1.4826 * MAD(H) + 1e-9)`.
/// The first period has no history and is never flagged.
pub fn dynamic_threshold(values: &[f64], p: &DetectorParams) -> Vec<usize> {
    let period = p.period.max(1);
    let mut out = Vec::new();
    // history per phase, kept sorted
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); period.min(values.len())];
    let mut dev = Vec::new();
    for (i, &x) in values.iter().enumerate() {
        let h = &mut history[i % period];
        if !h.is_empty() {
            let med = stats::percentile_sorted(h, 50.0);
            dev.clear();
            dev.extend(h.iter().map(|v| (v - med).abs()));
            dev.sort_unstable_by(f64::total_cmp);
            let mad = stats::percentile_sorted(&dev, 50.0);
            if (x - med).abs() > p.sensitivity * (MAD_TO_SIGMA * mad + SCALE_FLOOR) {
                out.push(i);
            }
        }
        let pos = h.partition_point(|v| v.total_cmp(&x).is_lt());
        h.insert(pos, x);
    }
    out
}

/// Flags point `i + 1` when the step `d[i]` departs from the mean of the
/// preceding `window` steps by more than `sensitivity` times their standard
/// deviation (floored at 1e-9). Steps without a full trailing window are not
/// judged.
pub fn local_steep(values: &[f64], p: &DetectorParams) -> Vec<usize> {
    let Ok(d) = first_diff(values, false) else {
        return Vec::new();
    };
    let w = p.window.max(1);
    if d.len() <= w {
        return Vec::new();
    }
    // prefix sums of d and d^2 give every window's moments in O(1)
    let mut s1 = vec![0.0; d.len() + 1];
    let mut s2 = vec![0.0; d.len() + 1];
    for (k, &v) in d.iter().enumerate() {
        s1[k + 1] = s1[k] + v;
        s2[k + 1] = s2[k] + v * v;
    }
    let wf = w as f64;
    let mut out = Vec::new();
    for i in w..d.len() {
        let sum = s1[i] - s1[i - w];
        let mean = sum / wf;
        let var = ((s2[i] - s2[i - w]) / wf - mean * mean).max(0.0);
        let sd = var.sqrt().max(SCALE_FLOOR);
        if (d[i] - mean).abs() > p.sensitivity * sd {
            out.push(i + 1);
        }
    }
    out
}

/// Flags point `i + 1` when `|d[i] - mean(d)| > sensitivity * std(d)` over
/// all steps. A zero standard deviation flags nothing.
pub fn global_steep(values: &[f64], p: &DetectorParams) -> Vec<usize> {
    let Ok(d) = first_diff(values, false) else {
        return Vec::new();
    };
    let mu = stats::mean(&d);
    let sd = stats::std_dev(&d);
    if sd == 0.0 {
        return Vec::new();
    }
    let limit = p.sensitivity * sd;
    (0..d.len()).filter(|&i| (d[i] - mu).abs() > limit).map(|i| i + 1).collect()
}
