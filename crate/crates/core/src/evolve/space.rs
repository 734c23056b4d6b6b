//! Genomes and the gene space describing a detection pipeline.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gene::{mutate_gene, Gene, GeneSpec, GeneValue, MutationRule};
use crate::detect::{Detector, DetectorParams, PipelineConfig, SENSITIVITY_RANGE, WINDOW_RANGE};
use crate::error::{Error, Result};
use crate::preprocess::{SmoothKind, SmoothMethod};

/// Largest smoother half-width searched; the window is `2 * half + 1`.
pub const MAX_SMOOTH_HALF_WINDOW: usize = 15;

/// Ordered gene descriptions plus the mutation settings shared by all genes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSpace {
    pub genes: Vec<(String, GeneSpec)>,
    /// Governs the mutation of every gene's rate; never mutated itself.
    pub meta_rate: f64,
    pub rule: MutationRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: Vec<Gene>,
    /// Number of passing series, once evaluated.
    pub fitness: Option<u32>,
    /// Creation order; breaks fitness ties during selection.
    pub birth: u64,
}

impl Genome {
    pub fn get(&self, name: &str) -> Option<&GeneValue> {
        self.genes.iter().find(|g| g.name == name).map(|g| &g.value)
    }
}

fn numeric(lo: usize, hi: usize) -> GeneSpec {
    GeneSpec::Numeric {
        lo: lo as f64,
        hi: hi as f64,
        integer: true,
    }
}

impl GeneSpace {
    pub fn new(genes: Vec<(String, GeneSpec)>, meta_rate: f64, rule: MutationRule) -> Result<Self> {
        if !(meta_rate > 0.0 && meta_rate.is_finite()) {
            return Err(Error::param("meta_rate", "must be a positive finite number"));
        }
        for (name, spec) in &genes {
            spec.validate(name)?;
        }
        Ok(Self { genes, meta_rate, rule })
    }

    /// The pipeline search space for series of length `len`.
    ///
    /// Genes: `normalize`, `smoother.method`, `smoother.half_window`,
    /// `detectors`, and `<detector>.{sensitivity,window,period}` for each of
    /// the four detectors.
    pub fn pipeline(len: usize, meta_rate: f64, rule: MutationRule) -> Result<Self> {
        if len < 8 {
            return Err(Error::InsufficientData(format!(
                "pipeline search needs series of at least 8 points, got {len}"
            )));
        }
        let names = |list: &[&str]| list.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let max_half = MAX_SMOOTH_HALF_WINDOW.min((len - 1) / 2);
        let period_hi = len / 2;
        let period_lo = (len / 48).clamp(2, period_hi);
        let mut genes = vec![
            ("normalize".to_string(), GeneSpec::Flag),
            (
                "smoother.method".to_string(),
                GeneSpec::Choice {
                    options: names(&["mean", "median"]),
                },
            ),
            ("smoother.half_window".to_string(), numeric(0, max_half)),
            (
                "detectors".to_string(),
                GeneSpec::OrderedSubset {
                    options: Detector::ALL.iter().map(|d| d.name().to_string()).collect(),
                },
            ),
        ];
        for d in Detector::ALL {
            genes.push((
                format!("{d}.sensitivity"),
                GeneSpec::Numeric {
                    lo: SENSITIVITY_RANGE.0,
                    hi: SENSITIVITY_RANGE.1,
                    integer: false,
                },
            ));
            genes.push((format!("{d}.window"), numeric(WINDOW_RANGE.0, WINDOW_RANGE.1.min(len))));
            genes.push((format!("{d}.period"), numeric(period_lo, period_hi)));
        }
        Self::new(genes, meta_rate, rule)
    }

    pub fn init_genome<R: Rng + ?Sized>(&self, birth: u64, rng: &mut R) -> Genome {
        Genome {
            genes: self.genes.iter().map(|(name, spec)| spec.init(name, rng)).collect(),
            fitness: None,
            birth,
        }
    }

    /// A mutated copy of `parent` with no fitness.
    pub fn mutate_genome<R: Rng + ?Sized>(&self, parent: &Genome, birth: u64, rng: &mut R) -> Genome {
        let mut child = parent.clone();
        for (gene, (_, spec)) in child.genes.iter_mut().zip(&self.genes) {
            mutate_gene(gene, spec, self.rule, self.meta_rate, rng);
        }
        child.fitness = None;
        child.birth = birth;
        child
    }

    /// Checks that `genome` matches this space gene for gene.
    pub fn check(&self, genome: &Genome) -> Result<()> {
        if genome.genes.len() != self.genes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.genes.len(),
                got: genome.genes.len(),
            });
        }
        for (gene, (name, spec)) in genome.genes.iter().zip(&self.genes) {
            if &gene.name != name || !spec.admits(&gene.value) || !(gene.rate > 0.0) {
                return Err(Error::param(name.clone(), format!("illegal gene {gene:?}")));
            }
        }
        Ok(())
    }

    /// Turns a genome into a pipeline. Besides the layout of
    /// [`GeneSpace::pipeline`], `normalize` may be a choice over
    /// `"true"`/`"false"` so that spaces can pin it.
    pub fn decode(&self, genome: &Genome) -> Result<PipelineConfig> {
        self.check(genome)?;
        let missing = |name: &str| Error::param(name, "gene missing from genome");
        let num = |name: &str| match genome.get(name) {
            Some(GeneValue::Numeric(x)) => Ok(*x),
            _ => Err(missing(name)),
        };
        // choice genes decode through their option names
        let choice = |name: &str| -> Option<&str> {
            let (_, spec) = self.genes.iter().find(|(n, _)| n == name)?;
            match (spec, genome.get(name)?) {
                (GeneSpec::Choice { options }, GeneValue::Choice(i)) => Some(options[*i].as_str()),
                _ => None,
            }
        };
        let normalize = match (genome.get("normalize"), choice("normalize")) {
            (Some(GeneValue::Flag(b)), _) => *b,
            (_, Some("true")) => true,
            (_, Some("false")) => false,
            _ => return Err(missing("normalize")),
        };
        let method = match choice("smoother.method") {
            Some("mean") => SmoothMethod::Mean,
            Some("median") => SmoothMethod::Median,
            _ => return Err(missing("smoother.method")),
        };
        let half = num("smoother.half_window")? as usize;
        let detectors: Vec<Detector> = match genome.get("detectors") {
            Some(GeneValue::Subset(idx)) => {
                let Some((_, GeneSpec::OrderedSubset { options })) =
                    self.genes.iter().find(|(n, _)| n == "detectors")
                else {
                    return Err(missing("detectors"));
                };
                idx.iter().map(|&i| options[i].parse()).collect::<Result<_>>()?
            }
            _ => return Err(missing("detectors")),
        };
        let mut params = BTreeMap::new();
        for &d in &detectors {
            params.insert(
                d,
                DetectorParams {
                    sensitivity: num(&format!("{d}.sensitivity"))?,
                    window: num(&format!("{d}.window"))? as usize,
                    period: num(&format!("{d}.period"))? as usize,
                },
            );
        }
        let config = PipelineConfig {
            normalize,
            smoother: SmoothKind::new(method, 2 * half + 1)?,
            detectors,
            params,
        };
        config.validate()?;
        Ok(config)
    }
}
