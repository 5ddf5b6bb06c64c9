//! Random susceptibility functions `gamma(t)` after recovery.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::duration::DurationLaw;
use super::path::Path;
use crate::error::Result;

/// Law of the susceptibility regained after the infectious period `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SusceptibilityLaw {
    /// Permanent immunity.
    Never,
    /// Full susceptibility right after recovery.
    Immediate,
    /// `gamma(t) = 1{t >= eta + D}`.
    Step { delay: DurationLaw },
    /// `gamma` rises linearly from 0 at `eta + D` to 1 at `eta + D + W`.
    Ramp {
        delay: DurationLaw,
        duration: DurationLaw,
    },
}

impl SusceptibilityLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            SusceptibilityLaw::Never | SusceptibilityLaw::Immediate => Ok(()),
            SusceptibilityLaw::Step { delay } => delay.validate(),
            SusceptibilityLaw::Ramp { delay, duration } => {
                delay.validate()?;
                duration.validate()
            }
        }
    }

    /// Susceptibility path given the end `eta` of the infectious period.
    pub fn sample_after<R: Rng + ?Sized>(&self, eta: f64, rng: &mut R) -> Path {
        match self {
            SusceptibilityLaw::Never => Path::zero(),
            SusceptibilityLaw::Immediate => Path::constant(vec![(eta, 1.0)]),
            SusceptibilityLaw::Step { delay } => {
                Path::constant(vec![(eta + delay.sample(rng), 1.0)])
            }
            SusceptibilityLaw::Ramp { delay, duration } => {
                let d = eta + delay.sample(rng);
                Path::linear(vec![(d, 0.0), (d + duration.sample(rng), 1.0)])
            }
        }
    }

    /// `g` with `gamma(t) = g(t - eta)` when the waning is deterministic.
    pub fn waning_curve(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        match self {
            SusceptibilityLaw::Never => Some(Box::new(|_| 0.0)),
            SusceptibilityLaw::Immediate => Some(Box::new(|a| if a >= 0.0 { 1.0 } else { 0.0 })),
            SusceptibilityLaw::Step {
                delay: DurationLaw::Deterministic { value },
            } => {
                let w = *value;
                Some(Box::new(move |a| if a >= w { 1.0 } else { 0.0 }))
            }
            SusceptibilityLaw::Ramp {
                delay: DurationLaw::Deterministic { value: d },
                duration: DurationLaw::Deterministic { value: w },
            } => {
                let (d, w) = (*d, *w);
                Some(Box::new(move |a| {
                    if a < d {
                        0.0
                    } else if w <= 0.0 || a >= d + w {
                        1.0
                    } else {
                        (a - d) / w
                    }
                }))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn step_waning_path() {
        let law = SusceptibilityLaw::Step {
            delay: DurationLaw::deterministic(2.0),
        };
        let mut rng = stream(0, Domain::Panel, 0);
        let p = law.sample_after(1.5, &mut rng);
        assert_eq!(p.value(3.4), 0.0);
        assert_eq!(p.value(3.5), 1.0);
        assert_eq!(p.value(100.0), 1.0);
        let g = law.waning_curve().unwrap();
        assert_eq!(g(1.9), 0.0);
        assert_eq!(g(2.0), 1.0);
    }

    #[test]
    fn ramp_is_bounded() {
        let law = SusceptibilityLaw::Ramp {
            delay: DurationLaw::exponential(1.0),
            duration: DurationLaw::uniform(1.0, 2.0),
        };
        let mut rng = stream(0, Domain::Panel, 1);
        for _ in 0..100 {
            let p = law.sample_after(1.0, &mut rng);
            for k in 0..50 {
                let v = p.value(k as f64 * 0.2);
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert!(law.waning_curve().is_none());
    }
}
