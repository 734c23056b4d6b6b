//! Genes with self-adaptive mutation rates.
//!
//! Every gene carries its own `rate`. Selection genes (choice, ordered subset,
//! flag) are re-drawn from scratch when a mutation fires; numeric genes take a
//! normal step with standard deviation `rate`. After the value, the rate
//! itself takes a normal step governed by a fixed meta rate.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Legal rate range for choice, subset and flag genes.
pub const SELECTION_RATE_RANGE: (f64, f64) = (1e-3, 1.0 - 1e-3);

/// When a selection gene mutates, given `r ~ U(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationRule {
    /// Mutate when `r > rate`: a larger rate means fewer mutations.
    #[default]
    Literal,
    /// Mutate when `r < rate`.
    Conventional,
}

impl MutationRule {
    pub fn fires(self, r: f64, rate: f64) -> bool {
        match self {
            MutationRule::Literal => r > rate,
            MutationRule::Conventional => r < rate,
        }
    }
}

/// Shape and legal values of one gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneSpec {
    Choice { options: Vec<String> },
    OrderedSubset { options: Vec<String> },
    Flag,
    Numeric { lo: f64, hi: f64, integer: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneValue {
    Choice(usize),
    /// Indices into the options, in execution order.
    Subset(Vec<usize>),
    Flag(bool),
    Numeric(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub name: String,
    pub value: GeneValue,
    pub rate: f64,
}

impl GeneSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            GeneSpec::Choice { options } | GeneSpec::OrderedSubset { options } if options.is_empty() => {
                Err(Error::param(name, "option list is empty"))
            }
            GeneSpec::OrderedSubset { options } if options.len() > 30 => {
                Err(Error::param(name, "too many options for a subset gene"))
            }
            GeneSpec::Numeric { lo, hi, integer } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::param(name, format!("bad range [{lo}, {hi}]")));
                }
                if *integer && (lo.fract() != 0.0 || hi.fract() != 0.0) {
                    return Err(Error::param(name, "integer range needs integral bounds"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Range the gene's own mutation rate lives in.
    pub fn rate_range(&self) -> (f64, f64) {
        match self {
            GeneSpec::Numeric { lo, hi, .. } => {
                let span = hi - lo;
                let low = (0.01 * span).max(1e-6);
                (low, (0.25 * span).max(low))
            }
            _ => SELECTION_RATE_RANGE,
        }
    }

    /// Standard deviation of the rate's own normal step.
    pub fn rate_step(&self, meta_rate: f64) -> f64 {
        match self {
            GeneSpec::Numeric { .. } => {
                let (lo, hi) = self.rate_range();
                meta_rate * (hi - lo)
            }
            _ => meta_rate,
        }
    }

    /// Uniform draw of a fresh value.
    pub fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> GeneValue {
        match self {
            GeneSpec::Choice { options } => GeneValue::Choice(rng.random_range(0..options.len())),
            GeneSpec::OrderedSubset { options } => {
                let n = options.len();
                // uniform over the 2^n - 1 non-empty subsets
                let mask: u64 = rng.random_range(1..(1u64 << n));
                let mut picked: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                picked.shuffle(rng);
                GeneValue::Subset(picked)
            }
            GeneSpec::Flag => GeneValue::Flag(rng.random::<bool>()),
            GeneSpec::Numeric { lo, hi, integer } => {
                if *integer {
                    GeneValue::Numeric(rng.random_range(*lo as i64..=*hi as i64) as f64)
                } else if lo == hi {
                    GeneValue::Numeric(*lo)
                } else {
                    GeneValue::Numeric(rng.random_range(*lo..=*hi))
                }
            }
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, name: &str, rng: &mut R) -> Gene {
        let value = self.sample_value(rng);
        let (lo, hi) = self.rate_range();
        let rate = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        Gene {
            name: name.to_string(),
            value,
            rate,
        }
    }

    /// Whether `value` is legal for this gene.
    pub fn admits(&self, value: &GeneValue) -> bool {
        match (self, value) {
            (GeneSpec::Choice { options }, GeneValue::Choice(i)) => *i < options.len(),
            (GeneSpec::OrderedSubset { options }, GeneValue::Subset(v)) => {
                let mut seen = vec![false; options.len()];
                !v.is_empty()
                    && v.iter().all(|&i| i < options.len() && !std::mem::replace(&mut seen[i], true))
            }
            (GeneSpec::Flag, GeneValue::Flag(_)) => true,
            (GeneSpec::Numeric { lo, hi, integer }, GeneValue::Numeric(x)) => {
                (*lo..=*hi).contains(x) && (!integer || x.fract() == 0.0)
            }
            _ => false,
        }
    }
}

fn normal_step<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if sd > 0.0 {
        Normal::new(mean, sd).expect("finite positive sd").sample(rng)
    } else {
        mean
    }
}

/// Mutates one gene in place: first the value using the current rate, then
/// the rate. Returns whether a selection gene was re-drawn (always `false`
/// for numeric genes, which move on every call).
pub fn mutate_gene<R: Rng + ?Sized>(
    gene: &mut Gene,
    spec: &GeneSpec,
    rule: MutationRule,
    meta_rate: f64,
    rng: &mut R,
) -> bool {
    let mut redrawn = false;
    match spec {
        GeneSpec::Numeric { lo, hi, integer } => {
            if let GeneValue::Numeric(x) = gene.value {
                let mut y = normal_step(x, gene.rate, rng).clamp(*lo, *hi);
                if *integer {
                    y = y.round().clamp(*lo, *hi);
                }
                gene.value = GeneValue::Numeric(y);
            }
        }
        _ => {
            let r: f64 = rng.random();
            if rule.fires(r, gene.rate) {
                gene.value = spec.sample_value(rng);
                redrawn = true;
            }
        }
    }
    let (lo, hi) = spec.rate_range();
    gene.rate = normal_step(gene.rate, spec.rate_step(meta_rate), rng).clamp(lo, hi);
    redrawn
}
