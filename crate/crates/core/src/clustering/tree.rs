//! The three-level cluster tree.
//!
//! Level 1 splits on section sign, level 2 splits each branch on swing and
//! level 3 splits each of the four sub-branches on diff-thres. Each split is a
//! two-centroid k-means model plus the index of the centroid that means "T".
//! Features are extracted once per series; deeper levels only see the members
//! routed to them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_fit, KMeansConfig, KMeansModel};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, SeriesFeatures};
use crate::series::{ClusterCode, LabeledDataset};

/// One binary decision of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Split {
    KMeans {
        model: KMeansModel,
        /// Centroid index decoded as `T`.
        true_branch: usize,
    },
    /// Fewer than two training members reached this node: everything goes to
    /// branch 0, decoded as `F`.
    PassThrough,
}

impl Split {
    fn decide(&self, v: &[f64]) -> Result<bool> {
        match self {
            Split::KMeans { model, true_branch } => Ok(model.predict(v)? == *true_branch),
            Split::PassThrough => Ok(false),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if let Split::KMeans { model, true_branch } = self {
            model.validate()?;
            if model.dimension != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: model.dimension,
                });
            }
            if *true_branch > 1 {
                return Err(Error::param("true_branch", "must be 0 or 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub features: FeatureConfig,
    pub kmeans: KMeansConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub training_length: usize,
    pub features: FeatureConfig,
    pub level1: Split,
    /// Indexed by the level-1 bit (`F` = 0, `T` = 1).
    pub level2: [Split; 2],
    /// Indexed by `2 * level1_bit + level2_bit`.
    pub level3: [Split; 4],
}

/// Statistic deciding which side of a split is `T`.
fn stat(level: usize, f: &SeriesFeatures) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    match level {
        0 => {
            let v = &f.section_sign.values;
            v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64
        }
        1 => mean(&f.swing.values),
        _ => {
            let c = &f.diff_thres.counts;
            c.iter().map(|&x| f64::from(x)).sum::<f64>() / c.len().max(1) as f64
        }
    }
}

fn level_vector(level: usize, f: &SeriesFeatures) -> &[f64] {
    match level {
        0 => &f.section_sign.values,
        1 => &f.swing.values,
        _ => &f.diff_thres.features.values,
    }
}

fn fit_split(level: usize, feats: &[&SeriesFeatures], seed: u64, cfg: &KMeansConfig) -> Result<Split> {
    if feats.len() < 2 {
        return Ok(Split::PassThrough);
    }
    let points: Vec<&[f64]> = feats.iter().map(|f| level_vector(level, f)).collect();
    let model = kmeans_fit(&points, seed, cfg)?;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (f, p) in feats.iter().zip(&points) {
        let b = model.predict(p)?;
        sums[b] += stat(level, f);
        counts[b] += 1;
    }
    let avg = |b: usize| {
        if counts[b] == 0 {
            f64::NEG_INFINITY
        } else {
            sums[b] / counts[b] as f64
        }
    };
    let true_branch = usize::from(avg(1) > avg(0));
    Ok(Split::KMeans { model, true_branch })
}

/// Extracts features for every series of a dataset, in parallel, in order.
pub fn extract_features(dataset: &LabeledDataset, cfg: &FeatureConfig) -> Result<Vec<SeriesFeatures>> {
    let min = cfg.min_length();
    if dataset.common_length() < min {
        return Err(Error::InsufficientData(format!(
            "series length {} is shorter than the {min} points the feature windows need",
            dataset.common_length()
        )));
    }
    dataset
        .entries()
        .par_iter()
        .map(|e| cfg.extract(&e.series))
        .collect()
}

/// Fits the tree with default settings and returns it with the leaf of every
/// training series.
pub fn hierarchical_fit(dataset: &LabeledDataset, seed: u64) -> Result<(ClusterTree, Vec<ClusterCode>)> {
    hierarchical_fit_with(dataset, seed, &TreeConfig::default())
}

pub fn hierarchical_fit_with(
    dataset: &LabeledDataset,
    seed: u64,
    cfg: &TreeConfig,
) -> Result<(ClusterTree, Vec<ClusterCode>)> {
    let feats = extract_features(dataset, &cfg.features)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut next_seed = || seeds.random::<u64>();

    let all: Vec<&SeriesFeatures> = feats.iter().collect();
    let level1 = fit_split(0, &all, next_seed(), &cfg.kmeans)?;
    let bit1: Vec<bool> = all
        .iter()
        .map(|f| level1.decide(level_vector(0, f)))
        .collect::<Result<_>>()?;

    let mut level2 = Vec::with_capacity(2);
    let mut bit2 = vec![false; all.len()];
    for b1 in [false, true] {
        let idx: Vec<usize> = (0..all.len()).filter(|&i| bit1[i] == b1).collect();
        let members: Vec<&SeriesFeatures> = idx.iter().map(|&i| all[i]).collect();
        let split = fit_split(1, &members, next_seed(), &cfg.kmeans)?;
        for &i in &idx {
            bit2[i] = split.decide(level_vector(1, all[i]))?;
        }
        level2.push(split);
    }

    let mut level3 = Vec::with_capacity(4);
    for node in 0..4 {
        let (b1, b2) = (node & 2 != 0, node & 1 != 0);
        let members: Vec<&SeriesFeatures> = (0..all.len())
            .filter(|&i| bit1[i] == b1 && bit2[i] == b2)
            .map(|i| all[i])
            .collect();
        level3.push(fit_split(2, &members, next_seed(), &cfg.kmeans)?);
    }

    let tree = ClusterTree {
        training_length: dataset.common_length(),
        features: cfg.features.clone(),
        level1,
        level2: level2.try_into().expect("two level-2 splits"),
        level3: level3.try_into().expect("four level-3 splits"),
    };
    let codes = feats
        .iter()
        .map(|f| tree.predict_features(f))
        .collect::<Result<_>>()?;
    Ok((tree, codes))
}

impl ClusterTree {
    /// Routes already-extracted features to a leaf.
    pub fn predict_features(&self, f: &SeriesFeatures) -> Result<ClusterCode> {
        let periodic = self.level1.decide(level_vector(0, f))?;
        let large = self.level2[usize::from(periodic)].decide(level_vector(1, f))?;
        let node = 2 * usize::from(periodic) + usize::from(large);
        let dense = self.level3[node].decide(level_vector(2, f))?;
        Ok(ClusterCode::new(periodic, large, dense))
    }

    pub fn predict(&self, series: &[f64]) -> Result<ClusterCode> {
        if series.len() != self.training_length {
            return Err(Error::LengthMismatch {
                first: "cluster tree training data".into(),
                first_len: self.training_length,
                second: "series".into(),
                second_len: series.len(),
            });
        }
        self.predict_features(&self.features.extract(series)?)
    }

    /// Checks that every model's dimension matches the feature lengths implied
    /// by `training_length` and the window settings.
    pub fn validate(&self) -> Result<()> {
        let (d1, d2, d3) = self.features.lengths(self.training_length);
        if self.training_length < self.features.min_length() {
            return Err(Error::param("training_length", "too short for the feature windows"));
        }
        self.level1.validate(d1)?;
        self.level2.iter().try_for_each(|s| s.validate(d2))?;
        self.level3.iter().try_for_each(|s| s.validate(d3))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tree: ClusterTree = crate::io::read_json(path)?;
        tree.validate()?;
        Ok(tree)
    }
}

/// Convenience wrapper over [`ClusterTree::predict`].
pub fn hierarchical_predict(tree: &ClusterTree, series: &[f64]) -> Result<ClusterCode> {
    tree.predict(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{DatasetEntry, TimeSeries};

    fn dataset(series: Vec<Vec<f64>>) -> LabeledDataset {
        LabeledDataset::new(
            series
                .into_iter()
                .enumerate()
                .map(|(i, v)| DatasetEntry {
                    name: format!("s{i}"),
                    series: TimeSeries::new(v).unwrap(),
                    labels: None,
                    truth: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn wave(i: usize, len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| {
                let t = t as f64;
                let base = if i % 2 == 0 { (t / 60.0).sin() } else { 0.0 };
                base + 0.01 * (((t as usize * 31 + i * 17) % 13) as f64 - 6.0) * (1 + i % 3) as f64
            })
            .collect()
    }

    #[test]
    fn single_series_tree_passes_through() {
        let ds = dataset(vec![wave(0, 400)]);
        let (tree, codes) = hierarchical_fit(&ds, 1).unwrap();
        assert_eq!(tree.level1, Split::PassThrough);
        assert_eq!(codes, vec![ClusterCode::new(false, false, false)]);
    }

    #[test]
    fn training_series_predict_to_their_leaf() {
        let ds = dataset((0..12).map(|i| wave(i, 600)).collect());
        let (tree, codes) = hierarchical_fit(&ds, 9).unwrap();
        for (e, c) in ds.entries().iter().zip(&codes) {
            assert_eq!(tree.predict(&e.series).unwrap(), *c);
        }
        assert!(tree.predict(&[1.0; 599]).is_err());
        // constant series are legal input
        tree.predict(&[4.0; 600]).unwrap();
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ds = dataset((0..8).map(|i| wave(i, 500)).collect());
        let (tree, _) = hierarchical_fit(&ds, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        tree.save(&path).unwrap();
        assert_eq!(ClusterTree::load(&path).unwrap(), tree);
    }

    #[test]
    fn short_series_are_rejected() {
        let ds = dataset(vec![vec![1.0; 100], vec![2.0; 100]]);
        assert!(matches!(hierarchical_fit(&ds, 0), Err(Error::InsufficientData(_))));
    }
}
