//! Joint law of the exposed and infectious periods `(xi, eta)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::duration::DurationLaw;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JointLaw {
    Independent {
        latency: DurationLaw,
        infectious: DurationLaw,
    },
    /// Atoms `(xi, eta)` with the given weights.
    Empirical {
        pairs: Vec<[f64; 2]>,
        weights: Vec<f64>,
    },
}

impl JointLaw {
    pub fn independent(latency: DurationLaw, infectious: DurationLaw) -> Self {
        JointLaw::Independent {
            latency,
            infectious,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JointLaw::Independent {
                latency,
                infectious,
            } => {
                latency.validate()?;
                infectious.validate()
            }
            JointLaw::Empirical { pairs, weights } => {
                if pairs.is_empty() || pairs.len() != weights.len() {
                    return Err(invalid("joint empirical law needs matching pairs and weights"));
                }
                if pairs.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(invalid("joint empirical periods must be nonnegative"));
                }
                if weights.iter().any(|w| *w < 0.0) {
                    return Err(invalid("joint empirical weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("joint weights sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            JointLaw::Independent {
                latency,
                infectious,
            } => (latency.sample(rng), infectious.sample(rng)),
            JointLaw::Empirical { pairs, weights } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (p, w) in pairs.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return (p[0], p[1]);
                    }
                }
                let p = pairs.last().unwrap();
                (p[0], p[1])
            }
        }
    }

    pub fn has_atoms(&self) -> bool {
        match self {
            JointLaw::Independent {
                latency,
                infectious,
            } => latency.has_atoms() || infectious.has_atoms(),
            JointLaw::Empirical { .. } => true,
        }
    }

    /// Marginal law of the exposed period.
    pub fn latency(&self) -> DurationLaw {
        match self {
            JointLaw::Independent { latency, .. } => latency.clone(),
            JointLaw::Empirical { pairs, weights } => DurationLaw::Empirical {
                values: pairs.iter().map(|p| p[0]).collect(),
                weights: weights.clone(),
            },
        }
    }

    /// Marginal law of the infectious period.
    pub fn infectious(&self) -> DurationLaw {
        match self {
            JointLaw::Independent { infectious, .. } => infectious.clone(),
            JointLaw::Empirical { pairs, weights } => DurationLaw::Empirical {
                values: pairs.iter().map(|p| p[1]).collect(),
                weights: weights.clone(),
            },
        }
    }

    /// `P(xi <= t < xi + eta)`.
    pub fn psi(&self, t: f64) -> f64 {
        match self {
            JointLaw::Independent {
                latency,
                infectious,
            } => latency.expect_upto(t, |u| infectious.survival(t - u)),
            JointLaw::Empirical { pairs, weights } => pairs
                .iter()
                .zip(weights)
                .filter(|(p, _)| p[0] <= t && t < p[0] + p[1])
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// `P(xi + eta <= t)`.
    pub fn phi(&self, t: f64) -> f64 {
        match self {
            JointLaw::Independent {
                latency,
                infectious,
            } => latency.expect_upto(t, |u| infectious.cdf(t - u)),
            JointLaw::Empirical { pairs, weights } => pairs
                .iter()
                .zip(weights)
                .filter(|(p, _)| p[0] + p[1] <= t)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    pub fn mean_latency(&self) -> f64 {
        self.latency().mean()
    }

    pub fn mean_infectious(&self) -> f64 {
        self.infectious().mean()
    }
}
