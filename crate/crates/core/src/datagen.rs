//! Synthetic labelled KPI data.
//!
//! Each series is a baseline (sinusoid for periodic codes, ramped
//! piecewise-flat levels otherwise) plus Gaussian noise plus salt-and-pepper
//! impulses. The three code bits map to:
//!
//! * periodic: sinusoidal baseline with a period near [`GeneratorConfig::period`];
//! * large amplitude: Gaussian noise ten times stronger relative to the baseline;
//! * dense impulses: a higher per-point impulse probability.
//!
//! Anomaly segments (level shifts or short spike bursts, sized in units of the
//! local noise scale) can be planted on top for detection experiments.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{smooth, SmoothKind, SmoothMethod};
use crate::series::{AnomalyLabels, ClusterCode, DatasetEntry, LabeledDataset, Segment, TimeSeries};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation as a fraction of the amplitude.
    pub gaussian_sigma: f64,
    /// Per-point probability of an impulse.
    pub impulse_prob: f64,
    /// Impulse height as a multiple of the amplitude.
    pub impulse_magnitude: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        gaussian_sigma: 0.0,
        impulse_prob: 0.0,
        impulse_magnitude: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// `amplitude * sin(2 pi t / period + phase)`.
    Sinusoid { period: f64, phase: f64 },
    /// Flat levels (in units of the amplitude) switching at `breaks`, with
    /// transitions softened by a centered mean of width `ramp`.
    PiecewiseFlat {
        breaks: Vec<usize>,
        levels: Vec<f64>,
        ramp: usize,
    },
    /// Gaussian random walk with steps of `step * amplitude`, mean-smoothed
    /// with width `window`.
    RandomWalkSmoothed { step: f64, window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub code: ClusterCode,
    pub length: usize,
    pub amplitude: f64,
    pub offset: f64,
    pub baseline: Baseline,
    pub noise: NoiseSpec,
}

impl ArchetypeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::param("length", "must be at least 2"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite() && self.offset.is_finite()) {
            return Err(Error::param("amplitude", "must be positive and finite"));
        }
        let n = &self.noise;
        if !(0.0..=1.0).contains(&n.impulse_prob) {
            return Err(Error::param("noise.impulse_prob", "must lie in [0, 1]"));
        }
        if !(n.gaussian_sigma >= 0.0 && n.impulse_magnitude >= 0.0) {
            return Err(Error::param("noise", "sigma and impulse magnitude must be non-negative"));
        }
        let periodic = matches!(self.baseline, Baseline::Sinusoid { .. });
        if periodic != self.code.periodic {
            return Err(Error::param(
                "baseline",
                format!("code {} needs a {} baseline", self.code, if self.code.periodic { "sinusoid" } else { "non-periodic" }),
            ));
        }
        match &self.baseline {
            Baseline::Sinusoid { period, .. } if !(*period > 0.0) => {
                Err(Error::param("baseline.period", "must be positive"))
            }
            Baseline::PiecewiseFlat { breaks, levels, ramp } => {
                if levels.len() != breaks.len() + 1 {
                    return Err(Error::param("baseline.levels", "need one more level than breaks"));
                }
                if breaks.windows(2).any(|w| w[0] >= w[1]) || breaks.last().is_some_and(|&b| b >= self.length) {
                    return Err(Error::param("baseline.breaks", "must be increasing and inside the series"));
                }
                SmoothKind::new(SmoothMethod::Mean, *ramp)?;
                Ok(())
            }
            Baseline::RandomWalkSmoothed { window, .. } => SmoothKind::new(SmoothMethod::Mean, *window).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// The noise-free baseline, offset included.
    pub fn baseline_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let (n, a) = (self.length, self.amplitude);
        let raw: Vec<f64> = match &self.baseline {
            Baseline::Sinusoid { period, phase } => (0..n)
                .map(|t| a * (std::f64::consts::TAU * t as f64 / period + phase).sin())
                .collect(),
            Baseline::PiecewiseFlat { breaks, levels, ramp } => {
                let mut v = Vec::with_capacity(n);
                let mut seg = 0;
                for t in 0..n {
                    while seg < breaks.len() && t >= breaks[seg] {
                        seg += 1;
                    }
                    v.push(a * levels[seg]);
                }
                smooth(&v, SmoothKind::new(SmoothMethod::Mean, (*ramp).min(odd_floor(n)))?)?
            }
            Baseline::RandomWalkSmoothed { step, window } => {
                let normal = Normal::new(0.0, step * a).map_err(|e| Error::param("baseline.step", e.to_string()))?;
                let mut level = 0.0;
                let walk: Vec<f64> = (0..n)
                    .map(|_| {
                        level += normal.sample(rng);
                        level
                    })
                    .collect();
                smooth(&walk, SmoothKind::new(SmoothMethod::Mean, (*window).min(odd_floor(n)))?)?
            }
        };
        Ok(raw.into_iter().map(|v| v + self.offset).collect())
    }
}

fn odd_floor(n: usize) -> usize {
    if n % 2 == 1 {
        n
    } else {
        n - 1
    }
}

/// Median smoothing then mean smoothing: the median pass drops impulses, the
/// mean pass flattens the remaining noise.
pub fn extract_baseline(series: &[f64], mean_window: usize, median_window: usize) -> Result<Vec<f64>> {
    let med = smooth(series, SmoothKind::new(SmoothMethod::Median, median_window)?)?;
    smooth(&med, SmoothKind::new(SmoothMethod::Mean, mean_window)?)
}

/// Baseline plus Gaussian noise plus impulses. Each impulse replaces its point
/// with `baseline ± impulse_magnitude * amplitude`.
pub fn synthesize<R: Rng + ?Sized>(spec: &ArchetypeSpec, rng: &mut R) -> Result<(TimeSeries, ClusterCode)> {
    spec.validate()?;
    let base = spec.baseline_values(rng)?;
    let sigma = spec.noise.gaussian_sigma * spec.amplitude;
    let gauss = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| Error::param("noise.gaussian_sigma", e.to_string()))?)
    } else {
        None
    };
    let jump = spec.noise.impulse_magnitude * spec.amplitude;
    let values = base
        .iter()
        .map(|&b| {
            let noisy = b + gauss.as_ref().map_or(0.0, |g| g.sample(rng));
            if rng.random::<f64>() < spec.noise.impulse_prob {
                if rng.random::<bool>() {
                    b + jump
                } else {
                    b - jump
                }
            } else {
                noisy
            }
        })
        .collect();
    Ok((TimeSeries::new(values)?, spec.code))
}

/// Shape of planted anomalies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalySpec {
    /// Displacement in units of the local noise scale.
    pub magnitude: f64,
    /// Length range of level shifts, inclusive.
    pub shift_length: (usize, usize),
    /// Length range of spike bursts, inclusive.
    pub burst_length: (usize, usize),
    /// Fraction of the series kept anomaly-free at each end.
    pub edge_margin: f64,
    /// Minimum distance between planted segments.
    pub gap: usize,
    /// Half-width of the neighbourhood used to estimate the noise scale.
    pub neighbourhood: usize,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        Self {
            magnitude: 10.0,
            shift_length: (20, 60),
            burst_length: (5, 8),
            edge_margin: 0.125,
            gap: 60,
            neighbourhood: 120,
        }
    }
}

/// Noise scale around `[start, end)`: `std(diffs) / sqrt(2)`.
///
/// Salt-and-pepper impulses are part of the noise, so the estimate is the
/// plain standard deviation rather than a robust one.
pub fn local_noise_scale(values: &[f64], start: usize, end: usize, neighbourhood: usize) -> f64 {
    let lo = start.saturating_sub(neighbourhood);
    let hi = (end + neighbourhood).min(values.len());
    let diffs: Vec<f64> = values[lo..hi].windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.is_empty() {
        return 0.0;
    }
    stats::std_dev(&diffs) / std::f64::consts::SQRT_2
}

pub fn plant_anomalies<R: Rng + ?Sized>(
    series: &TimeSeries,
    count: usize,
    rng: &mut R,
) -> Result<(TimeSeries, AnomalyLabels)> {
    plant_anomalies_with(series, count, &AnomalySpec::default(), rng)
}

/// Plants `count` anomalies at random non-overlapping positions. Each label
/// covers the displaced points plus the following sample, where the series
/// returns to normal.
pub fn plant_anomalies_with<R: Rng + ?Sized>(
    series: &TimeSeries,
    count: usize,
    spec: &AnomalySpec,
    rng: &mut R,
) -> Result<(TimeSeries, AnomalyLabels)> {
    if count == 0 {
        return Ok((series.clone(), AnomalyLabels::empty()));
    }
    let (s_lo, s_hi) = spec.shift_length;
    let (b_lo, b_hi) = spec.burst_length;
    if s_lo == 0 || b_lo == 0 || s_lo > s_hi || b_lo > b_hi {
        return Err(Error::param("anomaly lengths", "ranges must be non-empty and positive"));
    }
    let n = series.len();
    let margin = (spec.edge_margin.clamp(0.0, 0.5) * n as f64) as usize;
    let mut values = series.values().to_vec();
    let mut segments: Vec<Segment> = Vec::with_capacity(count);
    for _ in 0..count {
        let burst = rng.random::<bool>();
        let len = if burst {
            rng.random_range(b_lo..=b_hi)
        } else {
            rng.random_range(s_lo..=s_hi)
        };
        // the label also covers the recovery sample at start + len
        let last_start = n.saturating_sub(margin).checked_sub(len + 1);
        let placed = last_start.filter(|&ls| ls >= margin).and_then(|ls| {
            (0..1000).find_map(|_| {
                let start = rng.random_range(margin..=ls);
                let seg = Segment::new(start, start + len + 1);
                let clear = segments
                    .iter()
                    .all(|o| seg.end + spec.gap <= o.start || o.end + spec.gap <= seg.start);
                clear.then_some(seg)
            })
        });
        let seg = placed.ok_or_else(|| {
            Error::InsufficientData(format!(
                "cannot fit {count} anomalies into a series of {n} points"
            ))
        })?;
        // measured on the input so earlier plants do not inflate it
        let mut sigma = local_noise_scale(series.values(), seg.start, seg.end, spec.neighbourhood);
        if !(sigma > 0.0) {
            // noise-free stretch: fall back to a small fraction of the level
            let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            sigma = 1e-3 * peak.max(1.0);
        }
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for v in &mut values[seg.start..seg.start + len] {
            let scale = if burst { rng.random_range(1.0..1.5) } else { 1.0 };
            *v += sign * spec.magnitude * sigma * scale;
        }
        segments.push(seg);
    }
    segments.sort();
    Ok((TimeSeries::new(values)?, AnomalyLabels::new(segments, Some(n))?))
}

/// Knobs of the default generator. Every field has a default, so a JSON spec
/// file only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub amplitude: f64,
    pub offset: f64,
    /// Nominal sinusoid period in points.
    pub period: f64,
    /// Relative period jitter per series.
    pub period_jitter: f64,
    /// Phase jitter as a fraction of a full cycle.
    pub phase_jitter: f64,
    /// Inclusive range of flat segments for non-periodic baselines.
    pub segments: (usize, usize),
    /// Width of the mean filter that ramps level changes.
    pub ramp: usize,
    pub sigma_small: f64,
    pub sigma_large: f64,
    pub impulse_sparse: f64,
    pub impulse_dense: f64,
    pub impulse_magnitude: f64,
    /// Inclusive range of planted anomalies per series.
    pub anomalies: (usize, usize),
    pub anomaly: AnomalySpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            offset: 10.0,
            period: 1440.0,
            period_jitter: 0.05,
            phase_jitter: 0.05,
            segments: (3, 6),
            ramp: 241,
            sigma_small: 0.005,
            sigma_large: 0.05,
            impulse_sparse: 0.01,
            impulse_dense: 0.06,
            impulse_magnitude: 1.0,
            anomalies: (0, 0),
            anomaly: AnomalySpec::default(),
        }
    }
}

impl GeneratorConfig {
    /// Draws a jittered archetype for `code`.
    pub fn sample_spec<R: Rng + ?Sized>(&self, code: ClusterCode, length: usize, rng: &mut R) -> Result<ArchetypeSpec> {
        let baseline = if code.periodic {
            let pj = self.period_jitter.abs();
            let period = self.period * rng.random_range(1.0 - pj..=1.0 + pj);
            let ph = self.phase_jitter.abs();
            let phase = std::f64::consts::TAU * rng.random_range(-ph..=ph);
            Baseline::Sinusoid { period, phase }
        } else {
            let (lo, hi) = self.segments;
            if lo < 1 || lo > hi {
                return Err(Error::param("segments", "need 1 <= min <= max"));
            }
            let pieces = rng.random_range(lo..=hi);
            let edge = 100.min(length / 10);
            let room = length.saturating_sub(2 * edge);
            if room < pieces - 1 {
                return Err(Error::InsufficientData(format!(
                    "{length} points cannot hold {pieces} level segments"
                )));
            }
            let mut breaks: Vec<usize> = sample(rng, room, pieces - 1).into_iter().map(|b| b + edge).collect();
            breaks.sort_unstable();
            let mut levels: Vec<f64> = (0..pieces).map(|_| rng.random_range(-1.0..=1.0)).collect();
            // stretch to the full [-1, 1] so every baseline spans the amplitude
            let (lo, hi) = levels
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if hi > lo {
                levels.iter_mut().for_each(|v| *v = 2.0 * (*v - lo) / (hi - lo) - 1.0);
            }
            Baseline::PiecewiseFlat {
                breaks,
                levels,
                ramp: self.ramp,
            }
        };
        let spec = ArchetypeSpec {
            code,
            length,
            amplitude: self.amplitude,
            offset: self.offset,
            baseline,
            noise: NoiseSpec {
                gaussian_sigma: if code.large_amplitude {
                    self.sigma_large
                } else {
                    self.sigma_small
                },
                impulse_prob: if code.dense_impulses {
                    self.impulse_dense
                } else {
                    self.impulse_sparse
                },
                impulse_magnitude: self.impulse_magnitude,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One series (with planted anomalies if configured) from its own seed.
    pub fn generate_entry(&self, code: ClusterCode, length: usize, name: String, seed: u64) -> Result<DatasetEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = self.sample_spec(code, length, &mut rng)?;
        let (series, _) = synthesize(&spec, &mut rng)?;
        let (lo, hi) = self.anomalies;
        if lo > hi {
            return Err(Error::param("anomalies", "min exceeds max"));
        }
        let (series, labels) = if hi == 0 {
            (series, None)
        } else {
            let count = rng.random_range(lo..=hi);
            let (s, l) = plant_anomalies_with(&series, count, &self.anomaly, &mut rng)?;
            (s, Some(l))
        };
        Ok(DatasetEntry {
            name,
            series,
            labels,
            truth: Some(code),
        })
    }

    /// `per_cluster` series for each code, FFF first. Series are named
    /// `<CODE>_<k>` and each draws from its own seed taken in order from a
    /// generator seeded with `seed`.
    pub fn generate(&self, per_cluster: usize, length: usize, seed: u64) -> Result<LabeledDataset> {
        if per_cluster == 0 {
            return Err(Error::param("per_cluster", "must be at least 1"));
        }
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let jobs: Vec<(ClusterCode, String, u64)> = ClusterCode::all()
            .into_iter()
            .flat_map(|c| (0..per_cluster).map(move |k| (c, format!("{c}_{k:04}"))))
            .map(|(c, name)| (c, name, master.random()))
            .collect();
        let entries = jobs
            .into_par_iter()
            .map(|(c, name, s)| self.generate_entry(c, length, name, s))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(entries)
    }
}

/// Default-configured dataset without planted anomalies.
pub fn generate_dataset(per_cluster: usize, length: usize, seed: u64) -> Result<LabeledDataset> {
    GeneratorConfig::default().generate(per_cluster, length, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{global_threshold, DetectorParams};
    use crate::features::{swing, WindowSpec};

    fn flat_spec(noise: NoiseSpec) -> ArchetypeSpec {
        ArchetypeSpec {
            code: ClusterCode::new(true, false, false),
            length: 10_000,
            amplitude: 2.0,
            offset: 5.0,
            baseline: Baseline::Sinusoid {
                period: 500.0,
                phase: 0.3,
            },
            noise,
        }
    }

    #[test]
    fn zero_noise_gives_the_baseline() {
        let spec = flat_spec(NoiseSpec::NONE);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, code) = synthesize(&spec, &mut rng).unwrap();
        let base = spec.baseline_values(&mut rng).unwrap();
        assert_eq!(s.values(), &base[..]);
        assert_eq!(code, spec.code);
    }

    #[test]
    fn impulse_count_follows_binomial_law() {
        let spec = flat_spec(NoiseSpec {
            gaussian_sigma: 0.0,
            impulse_prob: 0.05,
            impulse_magnitude: 3.0,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (s, _) = synthesize(&spec, &mut rng).unwrap();
        let base = spec.baseline_values(&mut rng).unwrap();
        let hits = s.iter().zip(&base).filter(|(a, b)| (*a - *b).abs() > 1.0).count() as f64;
        let sd = (10_000.0f64 * 0.05 * 0.95).sqrt();
        assert!((hits - 500.0).abs() <= 3.0 * sd, "{hits}");
    }

    #[test]
    fn spec_must_match_code() {
        let mut spec = flat_spec(NoiseSpec::NONE);
        spec.code = ClusterCode::new(false, true, true);
        assert!(spec.validate().is_err());
        let mut spec = flat_spec(NoiseSpec::NONE);
        spec.noise.impulse_prob = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn baseline_extraction_is_median_then_mean() {
        let mut x = vec![0.0; 20];
        x[4] = 9.0;
        x[5] = 9.0;
        x[12] = 6.0;
        // the median pass keeps the pair and drops the lone spike; the mean
        // pass then spreads the pair over its neighbours
        let mut expect = vec![0.0; 20];
        expect[3..7].copy_from_slice(&[3.0, 6.0, 6.0, 3.0]);
        assert_eq!(extract_baseline(&x, 3, 3).unwrap(), expect);
        // the other order leaves a trace of the lone spike
        let other = smooth(&smooth(&x, SmoothKind::new(SmoothMethod::Mean, 3).unwrap()).unwrap(),
            SmoothKind::new(SmoothMethod::Median, 3).unwrap()).unwrap();
        assert_ne!(other, expect);
        assert_eq!(extract_baseline(&[4.0; 9], 5, 3).unwrap(), vec![4.0; 9]);
        assert!(extract_baseline(&[1.0; 4], 5, 3).is_err());
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let a = generate_dataset(2, 720, 7).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a.common_length(), 720);
        assert_eq!(a, generate_dataset(2, 720, 7).unwrap());
        assert_ne!(a, generate_dataset(2, 720, 8).unwrap());
        for code in ClusterCode::all() {
            assert_eq!(a.entries().iter().filter(|e| e.truth == Some(code)).count(), 2);
        }
    }

    #[test]
    fn large_amplitude_codes_swing_more() {
        let ds = generate_dataset(10, 2880, 3).unwrap();
        let mean_swing = |code: &str| {
            let code: ClusterCode = code.parse().unwrap();
            let v: Vec<f64> = ds
                .entries()
                .iter()
                .filter(|e| e.truth == Some(code))
                .map(|e| stats::mean(&swing(&e.series, WindowSpec::SWING).unwrap().values))
                .collect();
            stats::mean(&v)
        };
        assert!(mean_swing("TTT") > mean_swing("FFF"));
    }

    #[test]
    fn planting_zero_is_identity() {
        let s = TimeSeries::new((0..500).map(|i| i as f64).collect()).unwrap();
        let (out, labels) = plant_anomalies(&s, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, s);
        assert!(labels.is_empty());
    }

    #[test]
    fn planted_segments_are_disjoint_and_sorted() {
        let s = TimeSeries::new(vec![1.0; 3000]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, labels) = plant_anomalies(&s, 3, &mut rng).unwrap();
        assert_eq!(labels.segments().len(), 3);
        for w in labels.segments().windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        assert!(plant_anomalies(&TimeSeries::new(vec![1.0; 100]).unwrap(), 3, &mut rng).is_err());
    }

    #[test]
    fn noise_scale_counts_impulses() {
        // one impulse of height 1 every 20 points: 10 of 199 diffs are +-1
        let x: Vec<f64> = (0..200).map(|i| if i % 20 == 10 { 1.0 } else { 0.0 }).collect();
        let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let expected = stats::std_dev(&d) / std::f64::consts::SQRT_2;
        assert!(expected > 0.1);
        assert_eq!(local_noise_scale(&x, 0, 200, 0), expected);
        assert_eq!(local_noise_scale(&[5.0; 50], 10, 20, 5), 0.0);
    }

    #[test]
    fn planted_ten_sigma_shift_trips_global_threshold() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise = TimeSeries::new((0..2000).map(|_| normal.sample(&mut rng)).collect()).unwrap();
        let spec = AnomalySpec {
            burst_length: (20, 60),
            ..AnomalySpec::default()
        };
        let (x, labels) = plant_anomalies_with(&noise, 1, &spec, &mut rng).unwrap();
        let seg = labels.segments()[0];
        // the local scale estimate of unit Gaussian noise is close to 1
        let sigma = local_noise_scale(&noise, seg.start, seg.end, 120);
        assert!((sigma - 1.0).abs() < 0.25, "{sigma}");
        let flagged = global_threshold(&x, &DetectorParams::default());
        assert!(flagged.contains(&seg.start));
        assert!(flagged.iter().all(|&i| labels.covers(i)), "{flagged:?} vs {seg:?}");
    }
}
