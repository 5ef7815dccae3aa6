//! Meta-distributions: the building blocks of the prior's hyperparameter space.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Normal};
use serde::{Deserialize, Serialize};

/// A sampling distribution for one prior hyperparameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MetaDistribution {
    Uniform {
        lo: f64,
        hi: f64,
        round: bool,
    },
    Beta {
        alpha: f64,
        beta: f64,
        scale: f64,
    },
    /// Mean drawn uniformly (log-uniformly when `log_scaled`) from
    /// [min_mean, max_mean], then a normal draw around it truncated into the
    /// declared support. `round` snaps to integers after truncation.
    TruncatedNormal {
        min_mean: f64,
        max_mean: f64,
        round: bool,
        lower_bound: f64,
        log_scaled: bool,
    },
    Choice {
        values: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl MetaDistribution {
    pub fn point(v: f64) -> Self {
        MetaDistribution::Uniform { lo: v, hi: v, round: false }
    }

    pub fn choice_bool(p_true: f64) -> Self {
        MetaDistribution::Choice { values: vec![1.0, 0.0], weights: vec![p_true, 1.0 - p_true] }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            MetaDistribution::Uniform { lo, hi, .. } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(Error::Config(format!("{name}: inverted or non-finite uniform bounds [{lo}, {hi}]")));
                }
            }
            MetaDistribution::Beta { alpha, beta, scale } => {
                if *alpha <= 0.0 || *beta <= 0.0 || *scale <= 0.0 {
                    return Err(Error::Config(format!("{name}: beta parameters must be positive (α={alpha}, β={beta}, scale={scale})")));
                }
            }
            MetaDistribution::TruncatedNormal { min_mean, max_mean, lower_bound, log_scaled, .. } => {
                if min_mean > max_mean {
                    return Err(Error::Config(format!("{name}: inverted mean bounds [{min_mean}, {max_mean}]")));
                }
                if *log_scaled && *min_mean <= 0.0 {
                    return Err(Error::Config(format!("{name}: log-scaled mean needs min_mean > 0, got {min_mean}")));
                }
                if !lower_bound.is_finite() {
                    return Err(Error::Config(format!("{name}: non-finite lower bound")));
                }
            }
            MetaDistribution::Choice { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::Config(format!("{name}: choice needs matching non-empty values/weights")));
                }
                if weights.iter().any(|w| *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::Config(format!("{name}: choice weights must be non-negative with positive sum")));
                }
            }
        }
        Ok(())
    }

    /// Support bounds used for min-max encoding into [0, 1].
    pub fn support(&self) -> (f64, f64) {
        match self {
            MetaDistribution::Uniform { lo, hi, .. } => (*lo, *hi),
            MetaDistribution::Beta { scale, .. } => (0.0, *scale),
            MetaDistribution::TruncatedNormal { max_mean, lower_bound, .. } => {
                (*lower_bound, (max_mean * 3.0).max(lower_bound + 1.0))
            }
            MetaDistribution::Choice { values, .. } => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            MetaDistribution::Uniform { lo, hi, round } => {
                let v = if lo == hi { *lo } else { rng.gen_range(*lo..*hi) };
                if *round {
                    v.round().max(*lo)
                } else {
                    v
                }
            }
            MetaDistribution::Beta { alpha, beta, scale } => {
                let d = BetaDist::new(*alpha, *beta).expect("validated beta");
                d.sample(rng) * scale
            }
            MetaDistribution::TruncatedNormal { min_mean, max_mean, round, lower_bound, log_scaled } => {
                let mean = if min_mean == max_mean {
                    *min_mean
                } else if *log_scaled {
                    rng.gen_range(min_mean.ln()..max_mean.ln()).exp()
                } else {
                    rng.gen_range(*min_mean..*max_mean)
                };
                let std = (mean.abs() / 2.0).max(1e-12);
                let normal = Normal::new(mean, std).expect("validated normal");
                let (lo, hi) = self.support();
                let mut v = normal.sample(rng);
                for _ in 0..16 {
                    if v >= lo && v <= hi {
                        break;
                    }
                    v = normal.sample(rng);
                }
                let mut v = v.clamp(lo, hi);
                if *round {
                    v = v.round().max(*lower_bound);
                }
                v
            }
            MetaDistribution::Choice { values, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen_range(0.0..total);
                for (v, w) in values.iter().zip(weights.iter()) {
                    if u < *w {
                        return *v;
                    }
                    u -= w;
                }
                *values.last().unwrap()
            }
        }
    }

    /// Min-max encode a value of this distribution into [0, 1].
    pub fn encode(&self, v: f64) -> f32 {
        let (lo, hi) = self.support();
        if hi <= lo {
            return 0.0;
        }
        (((v - lo) / (hi - lo)).clamp(0.0, 1.0)) as f32
    }

    /// Inverse of [`encode`], snapping to the nearest valid support value.
    pub fn decode(&self, e: f32) -> f64 {
        let (lo, hi) = self.support();
        let raw = lo + (e.clamp(0.0, 1.0) as f64) * (hi - lo);
        match self {
            MetaDistribution::Uniform { round, .. } if *round => raw.round(),
            MetaDistribution::TruncatedNormal { round, lower_bound, .. } if *round => {
                raw.round().max(*lower_bound)
            }
            MetaDistribution::Choice { values, .. } => {
                *values
                    .iter()
                    .min_by(|a, b| (*a - raw).abs().partial_cmp(&(*b - raw).abs()).unwrap())
                    .unwrap()
            }
            _ => raw,
        }
    }
}
