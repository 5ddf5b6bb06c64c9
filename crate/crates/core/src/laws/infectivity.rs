//! Random infectivity functions `lambda(t)` of the time since infection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::duration::{beta22_quantile, DurationLaw};
use super::path::Path;
use crate::error::{invalid, Result};
use crate::mesh::Curve;
use crate::quadrature::gauss_legendre;

fn default_scale() -> f64 {
    1.0
}

/// Triangular profile with random onset and duration: zero on `[0, zeta]`,
/// linear up to its peak at `zeta + eta/5`, linear down to zero at
/// `zeta + eta`. `zeta = 2 + 2 X1`; `eta = 3 + X2` with peak `scale` for
/// reported cases and `eta = 8 + 4 X2` with peak `alpha * scale` otherwise;
/// `X1, X2 ~ Beta(2,2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovidProfile {
    pub alpha: f64,
    pub p_reported: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

struct CovidClass {
    weight: f64,
    peak: f64,
    eta_low: f64,
    eta_span: f64,
}

impl CovidProfile {
    fn classes(&self) -> [CovidClass; 2] {
        [
            CovidClass {
                weight: self.p_reported,
                peak: self.scale,
                eta_low: 3.0,
                eta_span: 1.0,
            },
            CovidClass {
                weight: 1.0 - self.p_reported,
                peak: self.alpha * self.scale,
                eta_low: 8.0,
                eta_span: 4.0,
            },
        ]
    }

    fn triangle(t: f64, zeta: f64, eta: f64, peak: f64) -> f64 {
        let s = t - zeta;
        if s <= 0.0 {
            return 0.0;
        }
        let u = s / eta;
        if u < 0.2 {
            5.0 * peak * u
        } else if u < 1.0 {
            1.25 * peak * (1.0 - u)
        } else {
            0.0
        }
    }

    fn mean(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for c in self.classes() {
            if c.weight == 0.0 {
                continue;
            }
            let eta_of = |y: f64| c.eta_low + c.eta_span * y;
            let inner = |zeta: f64| {
                let s = t - zeta;
                if s <= 0.0 {
                    return 0.0;
                }
                let breaks = [
                    (5.0 * s - c.eta_low) / c.eta_span,
                    (s - c.eta_low) / c.eta_span,
                ];
                piecewise(0.0, 1.0, &breaks, |y| {
                    6.0 * y * (1.0 - y) * Self::triangle(t, zeta, eta_of(y), c.peak)
                })
            };
            let outer_breaks: Vec<f64> = [
                0.0,
                c.eta_low / 5.0,
                (c.eta_low + c.eta_span) / 5.0,
                c.eta_low,
                c.eta_low + c.eta_span,
            ]
            .iter()
            .map(|shift| (t - shift - 2.0) / 2.0)
            .collect();
            total += c.weight
                * piecewise(0.0, 1.0, &outer_breaks, |x| {
                    6.0 * x * (1.0 - x) * inner(2.0 + 2.0 * x)
                });
        }
        total
    }

    fn laplace(&self, rho: f64) -> f64 {
        let (x, w) = gauss_legendre(16);
        let nodes: Vec<(f64, f64)> = x
            .iter()
            .zip(&w)
            .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        let mut total = 0.0;
        for c in self.classes() {
            let mut acc = 0.0;
            for &(x1, w1) in &nodes {
                for &(x2, w2) in &nodes {
                    let zeta = 2.0 + 2.0 * x1;
                    let eta = c.eta_low + c.eta_span * x2;
                    let p = Self::path(zeta, eta, c.peak);
                    acc += w1 * w2 * 36.0 * x1 * (1.0 - x1) * x2 * (1.0 - x2) * p.laplace(rho);
                }
            }
            total += c.weight * acc;
        }
        total
    }

    fn path(zeta: f64, eta: f64, peak: f64) -> Path {
        Path::linear(vec![(zeta, 0.0), (zeta + 0.2 * eta, peak), (zeta + eta, 0.0)])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Path {
        let zeta = 2.0 + 2.0 * beta22_quantile(rng.gen());
        let x2 = beta22_quantile(rng.gen());
        let reported = rng.gen::<f64>() < self.p_reported;
        let (eta, peak) = if reported {
            (3.0 + x2, self.scale)
        } else {
            (8.0 + 4.0 * x2, self.alpha * self.scale)
        };
        Self::path(zeta, eta, peak)
    }

    /// Law of `zeta + eta`, the time at which infectivity returns to zero.
    fn period_law(&self) -> DurationLaw {
        let onset = DurationLaw::shifted_beta(2.0, 2.0);
        DurationLaw::mixture(vec![
            (
                self.p_reported,
                DurationLaw::sum(onset.clone(), DurationLaw::shifted_beta(3.0, 1.0)),
            ),
            (
                1.0 - self.p_reported,
                DurationLaw::sum(onset, DurationLaw::shifted_beta(8.0, 4.0)),
            ),
        ])
    }
}

/// Gauss-Legendre integration of `f` over `[a, b]`, split at the given
/// interior breakpoints.
fn piecewise(a: f64, b: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().cloned().filter(|x| *x > a && *x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.iter()
        .zip(pts.iter().skip(1))
        .map(|(lo, hi)| crate::quadrature::integrate(*lo, *hi, 2, &f))
        .sum()
}

/// Law of the random infectivity function of one individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InfectivityLaw {
    /// `rate * 1{t < eta}` with `eta ~ period`.
    Constant { rate: f64, period: DurationLaw },
    /// `rate * 1{xi <= t < xi + eta}` with independent `xi ~ latency`,
    /// `eta ~ period`.
    Latent {
        rate: f64,
        latency: DurationLaw,
        period: DurationLaw,
    },
    Covid(CovidProfile),
}

impl InfectivityLaw {
    pub fn constant(rate: f64, period: DurationLaw) -> Self {
        InfectivityLaw::Constant { rate, period }
    }

    pub fn covid(alpha: f64, p_reported: f64) -> Self {
        InfectivityLaw::Covid(CovidProfile {
            alpha,
            p_reported,
            scale: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InfectivityLaw::Constant { rate, period } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(invalid(format!("infectivity rate must be >= 0, got {rate}")));
                }
                period.validate()
            }
            InfectivityLaw::Latent {
                rate,
                latency,
                period,
            } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(invalid(format!("infectivity rate must be >= 0, got {rate}")));
                }
                latency.validate()?;
                period.validate()
            }
            InfectivityLaw::Covid(c) => {
                if !(0.0..=1.0).contains(&c.p_reported) {
                    return Err(invalid("p_reported must lie in [0, 1]"));
                }
                if !(c.alpha >= 0.0 && c.scale >= 0.0) {
                    return Err(invalid("alpha and scale must be nonnegative"));
                }
                Ok(())
            }
        }
    }

    /// Deterministic bound `lambda*` on every realization.
    pub fn max_rate(&self) -> f64 {
        match self {
            InfectivityLaw::Constant { rate, .. } | InfectivityLaw::Latent { rate, .. } => *rate,
            InfectivityLaw::Covid(c) => c.scale * c.alpha.max(1.0),
        }
    }

    /// Whether realizations are `rate * 1{t < eta}`.
    pub fn constant_rate(&self) -> Option<f64> {
        match self {
            InfectivityLaw::Constant { rate, .. } => Some(*rate),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Path {
        match self {
            InfectivityLaw::Constant { rate, period } => {
                Path::constant(vec![(0.0, *rate), (period.sample(rng), 0.0)])
            }
            InfectivityLaw::Latent {
                rate,
                latency,
                period,
            } => {
                let xi = latency.sample(rng);
                let eta = period.sample(rng);
                Path::constant(vec![(xi, *rate), (xi + eta, 0.0)])
            }
            InfectivityLaw::Covid(c) => c.sample(rng),
        }
    }

    /// Realization conditioned on `support_end > age`.
    pub fn sample_given_alive<R: Rng + ?Sized>(&self, age: f64, rng: &mut R) -> Result<Path> {
        if age <= 0.0 {
            return Ok(self.sample(rng));
        }
        if let InfectivityLaw::Constant { rate, period } = self {
            let residual = period.sample_residual(age, rng)?;
            return Ok(Path::constant(vec![(0.0, *rate), (age + residual, 0.0)]));
        }
        for _ in 0..1_000_000 {
            let p = self.sample(rng);
            if p.support_end() > age {
                return Ok(p);
            }
        }
        Err(invalid(format!(
            "infectivity law has (almost) no mass alive at age {age}"
        )))
    }

    /// Law of `sup { t : lambda(t) > 0 }`.
    pub fn period_law(&self) -> DurationLaw {
        match self {
            InfectivityLaw::Constant { period, .. } => period.clone(),
            InfectivityLaw::Latent {
                latency, period, ..
            } => DurationLaw::sum(latency.clone(), period.clone()),
            InfectivityLaw::Covid(c) => c.period_law(),
        }
    }

    /// Mean infectivity `E[lambda(t)]`, by closed form or quadrature.
    pub fn mean(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            InfectivityLaw::Constant { rate, period } => rate * period.survival(t),
            InfectivityLaw::Latent {
                rate,
                latency,
                period,
            } => rate * latency.expect_upto(t, |u| period.survival(t - u)),
            InfectivityLaw::Covid(c) => c.mean(t),
        }
    }

    /// Mean infectivity conditioned on being infected for longer than `age`,
    /// evaluated `t` after that age: `E[lambda(age + t) | eta > age]`.
    pub fn mean_given_alive(&self, age: f64, t: f64) -> f64 {
        if age <= 0.0 {
            return self.mean(t);
        }
        let alive = self.period_law().survival(age);
        if alive <= 0.0 {
            0.0
        } else {
            self.mean(age + t) / alive
        }
    }

    /// Left and right limits of the mean at `t`, averaged where the mean
    /// jumps.
    pub fn mean_mid(&self, t: f64, delta: f64) -> f64 {
        match self {
            InfectivityLaw::Constant { rate, period } if period.has_atoms() => {
                rate * 0.5 * (period.survival(t + delta) + period.survival((t - delta).max(0.0)))
            }
            InfectivityLaw::Latent {
                latency, period, ..
            } if latency.has_atoms() || period.has_atoms() => {
                0.5 * (self.mean(t + delta) + self.mean((t - delta).max(0.0)))
            }
            _ => self.mean(t),
        }
    }

    /// Exact mean sampled on a uniform grid.
    pub fn mean_curve_exact(&self, step: f64, nodes: usize) -> Curve {
        let delta = 1e-9 * step;
        Curve::from_fn(step, nodes, |t| {
            if t == 0.0 {
                self.mean(0.0)
            } else {
                self.mean_mid(t, delta)
            }
        })
    }

    /// `int_0^inf E[lambda(t)] exp(-rho t) dt`, `None` when it diverges.
    pub fn laplace(&self, rho: f64) -> Option<f64> {
        match self {
            InfectivityLaw::Constant { rate, period } => Some(rate * period.survival_laplace(rho)?),
            InfectivityLaw::Latent {
                rate,
                latency,
                period,
            } => Some(rate * latency.laplace(rho)? * period.survival_laplace(rho)?),
            InfectivityLaw::Covid(c) => Some(c.laplace(rho)),
        }
    }

    /// Basic reproduction number `int E[lambda(t)] dt`.
    pub fn r0(&self) -> f64 {
        self.laplace(0.0).expect("Laplace transform at zero is finite")
    }

    /// Horizon past which the mean infectivity is below `eps`.
    pub fn truncation_horizon(&self, eps: f64) -> f64 {
        self.period_law().truncation_horizon(eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn covid_paths_have_three_knots_and_bounded_peak() {
        let law = InfectivityLaw::covid(0.5, 0.8);
        let mut rng = stream(1, Domain::Panel, 0);
        for _ in 0..1000 {
            let p = law.sample(&mut rng);
            assert_eq!(p.knots.len(), 3);
            assert!(p.max() <= 1.0);
            let (zeta, _) = p.knots[0];
            assert!((2.0..=4.0).contains(&zeta));
            assert_eq!(p.value(zeta * 0.99), 0.0);
        }
    }

    #[test]
    fn covid_r0_closed_form() {
        // reported: area 0.5 * 1 * E[eta] = 1.75; unreported: 0.5 * alpha * 10
        let law = InfectivityLaw::covid(0.5, 0.8);
        assert!((law.r0() - 1.9).abs() < 1e-12);
        let area = crate::quadrature::integrate(0.0, 16.0, 160, |t| law.mean(t));
        assert!((area - 1.9).abs() < 1e-6, "area {area}");
    }

    #[test]
    fn covid_period_law_mean() {
        let law = InfectivityLaw::covid(0.5, 0.8);
        let p = law.period_law();
        assert!((p.mean() - (3.0 + 0.8 * 3.5 + 0.2 * 10.0)).abs() < 1e-12);
        assert!((p.cdf(16.0) - 1.0).abs() < 1e-12);
        assert_eq!(p.cdf(5.0), 0.0);
    }

    #[test]
    fn constant_law_mean_and_laplace() {
        let law = InfectivityLaw::constant(2.0, DurationLaw::exponential(1.0));
        assert!((law.mean(1.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((law.laplace(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((law.r0() - 2.0).abs() < 1e-12);
        assert!(law.laplace(-1.0).is_none());
    }

    #[test]
    fn latent_law_mean_matches_closed_form() {
        let (nu, gamma, rate): (f64, f64, f64) = (0.5, 0.2, 1.0);
        let law = InfectivityLaw::Latent {
            rate,
            latency: DurationLaw::exponential(nu),
            period: DurationLaw::exponential(gamma),
        };
        for t in [0.5, 2.0, 7.0] {
            let exact = rate * nu / (gamma - nu) * ((-nu * t).exp() - (-gamma * t).exp());
            assert!((law.mean(t) - exact).abs() < 1e-9, "t = {t}");
        }
        let l = law.laplace(0.1).unwrap();
        assert!((l - rate * nu / ((nu + 0.1) * (gamma + 0.1))).abs() < 1e-12);
    }

    #[test]
    fn conditioned_sampling_respects_age() {
        let law = InfectivityLaw::covid(0.5, 0.8);
        let mut rng = stream(2, Domain::Panel, 1);
        for _ in 0..200 {
            assert!(law.sample_given_alive(8.0, &mut rng).unwrap().support_end() > 8.0);
        }
        assert!(law.sample_given_alive(17.0, &mut rng).is_err());
    }
}
