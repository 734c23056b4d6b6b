//! Elitist evolutionary search: evaluate, keep the best `survivors`, refill
//! the population with mutated clones of uniformly chosen survivors.
//!
//! All randomness flows from one master generator drawn in a fixed order (one
//! seed per new genome), and fitness is a pure function, so results do not
//! depend on how many worker threads evaluate fitness.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gene::MutationRule;
use super::space::{GeneSpace, Genome};
use crate::detect::{run_pipeline, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::series_passes;
use crate::series::{ClusterCode, LabeledDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population: usize,
    pub survivors: usize,
    pub offspring: usize,
    pub generations: usize,
    pub seed: u64,
    /// A segment counts as detected only by a flag fewer than this many
    /// points after its start.
    pub delay_tolerance: usize,
    /// Fitness evaluation threads.
    pub workers: usize,
    pub meta_rate: f64,
    pub rule: MutationRule,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population: 200,
            survivors: 40,
            offspring: 160,
            generations: 40,
            seed: 0,
            delay_tolerance: 5,
            workers: 1,
            meta_rate: 0.1,
            rule: MutationRule::Literal,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.survivors < 1 {
            return Err(Error::param("survivors", "at least one survivor is required"));
        }
        if self.survivors + self.offspring != self.population {
            return Err(Error::param(
                "population",
                format!(
                    "survivors ({}) + offspring ({}) must equal population ({})",
                    self.survivors, self.offspring, self.population
                ),
            ));
        }
        if self.generations < 1 {
            return Err(Error::param("generations", "must be at least 1"));
        }
        if self.delay_tolerance < 1 {
            return Err(Error::param("delay_tolerance", "must be at least 1"));
        }
        if self.workers < 1 {
            return Err(Error::param("workers", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: u32,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    pub best: Genome,
    pub history: Vec<GenerationStats>,
    /// Number of series the fitness was measured on.
    pub dataset_size: usize,
}

/// `generation,best,mean` CSV.
pub fn history_csv(history: &[GenerationStats]) -> String {
    let mut out = String::from("generation,best,mean\n");
    for h in history {
        let _ = writeln!(out, "{},{},{}", h.generation, h.best, h.mean);
    }
    out
}

pub fn save_history(path: &Path, history: &[GenerationStats]) -> Result<()> {
    crate::io::write_text(path, &history_csv(history))
}

/// Number of series on which the decoded pipeline passes.
pub fn fitness(genome: &Genome, space: &GeneSpace, data: &LabeledDataset, delay_tolerance: usize) -> Result<u32> {
    let config = space.decode(genome)?;
    let mut passed = 0;
    for entry in data.entries() {
        let labels = entry.labels.as_ref().ok_or_else(|| {
            Error::InvalidLabels(format!("{} has no anomaly labels; fitness needs them", entry.name))
        })?;
        let result = run_pipeline(&config, &entry.series)?;
        if series_passes(&result.anomalous_indices, labels, delay_tolerance) {
            passed += 1;
        }
    }
    Ok(passed)
}

fn evaluate(pool: &rayon::ThreadPool, pop: &mut [Genome], space: &GeneSpace, data: &LabeledDataset, delay: usize) -> Result<()> {
    let scores: Vec<Option<u32>> = pool.install(|| {
        pop.par_iter()
            .map(|g| match g.fitness {
                Some(f) => Ok(Some(f)),
                None => fitness(g, space, data, delay).map(Some),
            })
            .collect::<Result<_>>()
    })?;
    for (g, s) in pop.iter_mut().zip(scores) {
        g.fitness = s;
    }
    Ok(())
}

/// Runs the search over the default pipeline space for `data`.
pub fn evolve(cfg: &EvolutionConfig, data: &LabeledDataset) -> Result<EvolutionOutcome> {
    let space = GeneSpace::pipeline(data.common_length(), cfg.meta_rate, cfg.rule)?;
    evolve_in(cfg, &space, data)
}

/// Runs the search over an arbitrary gene space whose genomes decode to
/// pipelines.
pub fn evolve_in(cfg: &EvolutionConfig, space: &GeneSpace, data: &LabeledDataset) -> Result<EvolutionOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("evolution needs a non-empty dataset".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut births = 0u64;
    let mut population: Vec<Genome> = (0..cfg.population)
        .map(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.random());
            births += 1;
            space.init_genome(births - 1, &mut rng)
        })
        .collect();

    let mut history = Vec::with_capacity(cfg.generations);
    let mut best: Option<Genome> = None;
    for generation in 0..cfg.generations {
        evaluate(&pool, &mut population, space, data, cfg.delay_tolerance)?;
        population.sort_by(|a, b| b.fitness.cmp(&a.fitness).then(a.birth.cmp(&b.birth)));
        let top = population[0].fitness.unwrap_or(0);
        let total: u64 = population.iter().map(|g| u64::from(g.fitness.unwrap_or(0))).sum();
        history.push(GenerationStats {
            generation,
            best: top,
            mean: total as f64 / population.len() as f64,
        });
        if best.as_ref().is_none_or(|b| top > b.fitness.unwrap_or(0)) {
            best = Some(population[0].clone());
        }
        if generation + 1 == cfg.generations {
            break;
        }
        population.truncate(cfg.survivors);
        for _ in 0..cfg.offspring {
            let mut rng = ChaCha8Rng::seed_from_u64(master.random());
            let parent = &population[rng.random_range(0..cfg.survivors)];
            let child = space.mutate_genome(parent, births, &mut rng);
            births += 1;
            population.push(child);
        }
    }
    Ok(EvolutionOutcome {
        best: best.expect("at least one generation"),
        history,
        dataset_size: data.len(),
    })
}

/// Seed of one cluster's search, derived from the run seed.
pub fn cluster_seed(seed: u64, code: ClusterCode) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=code.index()).map(|_| rng.random::<u64>()).last().expect("non-empty range")
}

/// The result of one cluster's search, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolvedPipeline {
    pub code: ClusterCode,
    /// Passing series out of `dataset_size`.
    pub fitness: u32,
    pub dataset_size: usize,
    pub pipeline: PipelineConfig,
    pub genome: Genome,
}

impl EvolvedPipeline {
    pub fn new(code: ClusterCode, outcome: &EvolutionOutcome, space: &GeneSpace) -> Result<Self> {
        Ok(Self {
            code,
            fitness: outcome.best.fitness.unwrap_or(0),
            dataset_size: outcome.dataset_size,
            pipeline: space.decode(&outcome.best)?,
            genome: outcome.best.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: EvolvedPipeline = crate::io::read_json(path)?;
        p.pipeline.validate()?;
        Ok(p)
    }
}

/// Evolves one pipeline per cluster code present in `codes` (aligned with
/// the dataset entries). Each cluster gets its own seed derived from
/// `cfg.seed` and the code (see [`cluster_seed`]), so adding or removing a
/// cluster leaves the others unchanged.
pub fn evolve_per_cluster(
    cfg: &EvolutionConfig,
    data: &LabeledDataset,
    codes: &[ClusterCode],
) -> Result<BTreeMap<ClusterCode, EvolutionOutcome>> {
    if codes.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: codes.len(),
        });
    }
    let mut out = BTreeMap::new();
    for code in ClusterCode::all() {
        if !codes.contains(&code) {
            continue;
        }
        let members = data.subset(|i, _| codes[i] == code)?;
        let cluster_cfg = EvolutionConfig {
            seed: cluster_seed(cfg.seed, code),
            ..cfg.clone()
        };
        out.insert(code, evolve(&cluster_cfg, &members)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::gene::GeneSpec;
    use crate::series::{AnomalyLabels, DatasetEntry, Segment, TimeSeries};

    fn labeled(n: usize) -> LabeledDataset {
        let entries = (0..n)
            .map(|i| {
                let mut v: Vec<f64> = (0..200).map(|t| ((t * 13 + i * 7) % 17) as f64 * 0.05).collect();
                let at = 60 + 10 * i;
                for x in &mut v[at..at + 5] {
                    *x += 30.0;
                }
                DatasetEntry {
                    name: format!("s{i}"),
                    series: TimeSeries::new(v).unwrap(),
                    labels: Some(AnomalyLabels::new(vec![Segment::new(at, at + 6)], Some(200)).unwrap()),
                    truth: None,
                }
            })
            .collect();
        LabeledDataset::new(entries).unwrap()
    }

    fn small(seed: u64, workers: usize) -> EvolutionConfig {
        EvolutionConfig {
            population: 12,
            survivors: 4,
            offspring: 8,
            generations: 6,
            seed,
            workers,
            ..EvolutionConfig::default()
        }
    }

    #[test]
    fn config_invariants() {
        assert!(EvolutionConfig::default().validate().is_ok());
        let bad = EvolutionConfig {
            offspring: 150,
            ..EvolutionConfig::default()
        };
        assert!(bad.validate().is_err());
        let none = EvolutionConfig {
            survivors: 0,
            offspring: 200,
            ..EvolutionConfig::default()
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn elitism_and_determinism() {
        let data = labeled(6);
        let a = evolve(&small(3, 1), &data).unwrap();
        assert_eq!(a.history.len(), 6);
        for w in a.history.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
        assert_eq!(a.best.fitness, Some(a.history.last().unwrap().best));
        let b = evolve(&small(3, 4), &data).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_point_space_has_constant_history() {
        let fixed = |v: f64| GeneSpec::Numeric {
            lo: v,
            hi: v,
            integer: true,
        };
        let one = |name: &str| GeneSpec::Choice {
            options: vec![name.to_string()],
        };
        let mut genes = vec![
            ("normalize".to_string(), one("false")),
            ("smoother.method".to_string(), one("mean")),
            ("smoother.half_window".to_string(), fixed(0.0)),
            (
                "detectors".to_string(),
                GeneSpec::OrderedSubset {
                    options: vec!["global_threshold".into()],
                },
            ),
        ];
        for d in crate::detect::Detector::ALL {
            genes.push((format!("{d}.sensitivity"), fixed(3.0)));
            genes.push((format!("{d}.window"), fixed(10.0)));
            genes.push((format!("{d}.period"), fixed(10.0)));
        }
        let space = GeneSpace::new(genes, 0.1, MutationRule::Literal).unwrap();
        let out = evolve_in(&small(1, 2), &space, &labeled(4)).unwrap();
        let first = out.history[0];
        assert!(out.history.iter().all(|h| h.best == first.best && h.mean == first.mean));
        assert_eq!(f64::from(first.best), first.mean);
    }

    #[test]
    fn fitness_needs_labels() {
        let mut entries = labeled(2).into_entries();
        entries[1].labels = None;
        let data = LabeledDataset::new(entries).unwrap();
        let space = GeneSpace::pipeline(200, 0.1, MutationRule::Literal).unwrap();
        let g = space.init_genome(0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(fitness(&g, &space, &data, 5), Err(Error::InvalidLabels(_))));
    }

    #[test]
    fn history_csv_layout() {
        let h = [GenerationStats {
            generation: 0,
            best: 3,
            mean: 1.5,
        }];
        assert_eq!(history_csv(&h), "generation,best,mean\n0,3,1.5\n");
    }
}
