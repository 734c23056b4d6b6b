//! Two-centroid k-means: k-means++ seeding, Lloyd iterations, best of several
//! restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: [Vec<f64>; 2],
    pub dimension: usize,
    /// Sum of squared distances of the training points to their centroid.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>; 2], v: &[f64]) -> usize {
    // ties go to centroid 0
    usize::from(sq_dist(v, &centroids[1]) < sq_dist(v, &centroids[0]))
}

impl KMeansModel {
    /// Index of the nearest centroid; equidistant points go to 0.
    pub fn predict(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(nearest(&self.centroids, v))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for c in &self.centroids {
            if c.len() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("centroids", "contain a non-finite value"));
            }
        }
        Ok(())
    }
}

fn check_points<V: AsRef<[f64]>>(points: &[V]) -> Result<usize> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "k-means needs at least 2 vectors, got {}",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    if dim == 0 {
        return Err(Error::param("vectors", "feature vectors are empty"));
    }
    for p in points {
        if p.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.as_ref().len(),
            });
        }
    }
    Ok(dim)
}

fn centroid_of<V: AsRef<[f64]>>(points: &[V], labels: &[usize], k: usize, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for (p, _) in points.iter().zip(labels).filter(|(_, &l)| l == k) {
        for (s, v) in sum.iter_mut().zip(p.as_ref()) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

/// Inertia of a fixed two-way partition, each part scored against its mean.
/// `labels` must contain only 0 and 1.
pub fn partition_inertia<V: AsRef<[f64]>>(points: &[V], labels: &[usize]) -> f64 {
    let dim = points.first().map_or(0, |p| p.as_ref().len());
    let centroids = [
        centroid_of(points, labels, 0, dim),
        centroid_of(points, labels, 1, dim),
    ];
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p.as_ref(), &centroids[l]))
        .sum()
}

fn plus_plus_init<V: AsRef<[f64]>>(points: &[V], rng: &mut ChaCha8Rng) -> [Vec<f64>; 2] {
    let first = points[rng.random_range(0..points.len())].as_ref().to_vec();
    let d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &first)).collect();
    let total: f64 = d2.iter().sum();
    let second = if total > 0.0 {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && *d > 0.0 {
                pick = i;
                break;
            }
        }
        // guard against rounding landing on a zero-weight tail element
        if d2[pick] == 0.0 {
            pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
        }
        pick
    } else {
        rng.random_range(0..points.len())
    };
    [first, points[second].as_ref().to_vec()]
}

struct Run {
    centroids: [Vec<f64>; 2],
    labels: Vec<usize>,
}

/// Lloyd iterations from the given centroids. Each entry pushed to `trace` is
/// the inertia after one centroid update.
fn lloyd<V: AsRef<[f64]>>(
    points: &[V],
    mut centroids: [Vec<f64>; 2],
    max_iter: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Run {
    let dim = centroids[0].len();
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..max_iter {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p.as_ref())).collect();
        for k in 0..2 {
            if next.iter().all(|&l| l != k) {
                // promote the point farthest from the surviving centroid
                let other = &centroids[1 - k];
                let far = points
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                        let d = sq_dist(p.as_ref(), other);
                        if d > best.1 {
                            (i, d)
                        } else {
                            best
                        }
                    })
                    .0;
                next[far] = k;
            }
        }
        if next == labels {
            break;
        }
        labels = next;
        centroids = [
            centroid_of(points, &labels, 0, dim),
            centroid_of(points, &labels, 1, dim),
        ];
        if let Some(t) = trace.as_deref_mut() {
            t.push(
                points
                    .iter()
                    .zip(&labels)
                    .map(|(p, &l)| sq_dist(p.as_ref(), &centroids[l]))
                    .sum(),
            );
        }
    }
    Run { centroids, labels }
}

/// Fits two centroids; deterministic in `seed`.
pub fn kmeans_fit<V: AsRef<[f64]>>(points: &[V], seed: u64, cfg: &KMeansConfig) -> Result<KMeansModel> {
    let dimension = check_points(points)?;
    if cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(Error::param("kmeans", "restarts and max_iter must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansModel> = None;
    for _ in 0..cfg.restarts {
        let init = plus_plus_init(points, &mut rng);
        let run = lloyd(points, init, cfg.max_iter, None);
        let inertia = points
            .iter()
            .map(|p| {
                let p = p.as_ref();
                sq_dist(p, &run.centroids[nearest(&run.centroids, p)])
            })
            .sum();
        debug_assert_eq!(run.labels.len(), points.len());
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansModel {
                centroids: run.centroids,
                dimension,
                inertia,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
