//! Distributions of positive durations (latent, infectious, immune periods).

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Result};
use crate::quadrature::composite_rule;
use crate::rng::open_unit;

const QUAD_PANELS: usize = 64;
const TAIL_EPS: f64 = 1e-13;

/// Inverse CDF of Beta(2,2), whose CDF is `3y^2 - 2y^3`.
pub fn beta22_quantile(u: f64) -> f64 {
    0.5 + ((2.0 * u - 1.0).clamp(-1.0, 1.0).asin() / 3.0).sin()
}

fn beta22_cdf(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    y * y * (3.0 - 2.0 * y)
}

/// One weighted component of a [`DurationLaw::Mixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub law: DurationLaw,
}

/// Law of a nonnegative duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DurationLaw {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Gamma { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    /// `offset + span * Beta(2,2)`.
    ShiftedBeta { offset: f64, span: f64 },
    /// Finitely many atoms.
    Empirical { values: Vec<f64>, weights: Vec<f64> },
    /// Survival function tabulated at `k * step`, linear in between, zero
    /// past the last node. A value below 1 at zero is an atom at zero.
    Tabulated { step: f64, survival: Vec<f64> },
    /// Sum of two independent durations.
    Sum {
        first: Box<DurationLaw>,
        second: Box<DurationLaw>,
    },
    Mixture { components: Vec<Component> },
}

impl DurationLaw {
    pub fn exponential(rate: f64) -> Self {
        DurationLaw::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        DurationLaw::Deterministic { value }
    }

    pub fn gamma(shape: f64, scale: f64) -> Self {
        DurationLaw::Gamma { shape, scale }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        DurationLaw::Uniform { low, high }
    }

    pub fn shifted_beta(offset: f64, span: f64) -> Self {
        DurationLaw::ShiftedBeta { offset, span }
    }

    pub fn sum(first: DurationLaw, second: DurationLaw) -> Self {
        DurationLaw::Sum {
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    pub fn mixture(parts: Vec<(f64, DurationLaw)>) -> Self {
        DurationLaw::Mixture {
            components: parts
                .into_iter()
                .map(|(weight, law)| Component { weight, law })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be nonnegative, got {v}")))
            }
        };
        match self {
            DurationLaw::Exponential { rate } => pos("rate", *rate),
            DurationLaw::Deterministic { value } => nonneg("value", *value),
            DurationLaw::Gamma { shape, scale } => {
                pos("shape", *shape)?;
                pos("scale", *scale)
            }
            DurationLaw::Uniform { low, high } => {
                nonneg("low", *low)?;
                if high > low && high.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("uniform needs low < high, got [{low}, {high}]")))
                }
            }
            DurationLaw::ShiftedBeta { offset, span } => {
                nonneg("offset", *offset)?;
                pos("span", *span)
            }
            DurationLaw::Empirical { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(invalid("empirical law needs equally many values and weights"));
                }
                for v in values {
                    nonneg("value", *v)?;
                }
                for w in weights {
                    nonneg("weight", *w)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("empirical weights sum to {total}, not 1")));
                }
                Ok(())
            }
            DurationLaw::Tabulated { step, survival } => {
                pos("step", *step)?;
                if survival.len() < 2 {
                    return Err(invalid("tabulated survival needs at least two nodes"));
                }
                if survival[0] > 1.0 + 1e-12 || *survival.last().unwrap() < 0.0 {
                    return Err(invalid("tabulated survival must lie in [0, 1]"));
                }
                if survival.windows(2).any(|w| w[1] > w[0] + 1e-12) {
                    return Err(invalid("tabulated survival must be nonincreasing"));
                }
                Ok(())
            }
            DurationLaw::Sum { first, second } => {
                first.validate()?;
                second.validate()
            }
            DurationLaw::Mixture { components } => {
                if components.is_empty() {
                    return Err(invalid("mixture needs at least one component"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("mixture weights sum to {total}, not 1")));
                }
                for c in components {
                    nonneg("weight", c.weight)?;
                    c.law.validate()?;
                }
                Ok(())
            }
        }
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            DurationLaw::Exponential { rate } => -(-rate * x).exp_m1(),
            DurationLaw::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            DurationLaw::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(*shape, x / scale)
                }
            }
            DurationLaw::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            DurationLaw::ShiftedBeta { offset, span } => beta22_cdf((x - offset) / span),
            DurationLaw::Empirical { values, weights } => values
                .iter()
                .zip(weights)
                .filter(|(v, _)| **v <= x)
                .map(|(_, w)| w)
                .sum(),
            DurationLaw::Tabulated { .. } => 1.0 - self.survival(x),
            // condition on the summand with atoms so the integrand stays continuous
            DurationLaw::Sum { first, second } if first.has_atoms() => {
                first.expect_upto(x, |a| second.cdf(x - a))
            }
            DurationLaw::Sum { first, second } => {
                second.expect_upto(x, |b| first.cdf(x - b))
            }
            DurationLaw::Mixture { components } => {
                components.iter().map(|c| c.weight * c.law.cdf(x)).sum()
            }
        }
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            DurationLaw::Exponential { rate } => {
                if x < 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            DurationLaw::Tabulated { step, survival } => {
                if x < 0.0 {
                    return 1.0;
                }
                let u = x / step;
                let k = u.floor() as usize;
                if k + 1 >= survival.len() {
                    return 0.0;
                }
                let w = u - k as f64;
                survival[k] * (1.0 - w) + survival[k + 1] * w
            }
            DurationLaw::Gamma { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else if x.is_infinite() {
                    0.0
                } else {
                    gamma_ur(*shape, x / scale)
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// `P(X >= x)`, the left limit of the survival function.
    pub fn survival_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            DurationLaw::Deterministic { value } => {
                if x <= *value {
                    1.0
                } else {
                    0.0
                }
            }
            DurationLaw::Empirical { values, weights } => values
                .iter()
                .zip(weights)
                .filter(|(v, _)| **v >= x)
                .map(|(_, w)| w)
                .sum(),
            DurationLaw::Sum { first, second } if self.has_atoms() => {
                1.0 - second.expect_upto(x, |b| 1.0 - first.survival_left(x - b))
            }
            DurationLaw::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.law.survival_left(x))
                .sum(),
            _ => self.survival(x),
        }
    }

    /// Average of the one-sided survival limits; equals the survival
    /// function wherever it is continuous.
    pub fn survival_mid(&self, x: f64) -> f64 {
        if self.has_atoms() {
            0.5 * (self.survival(x) + self.survival_left(x))
        } else {
            self.survival(x)
        }
    }

    pub fn has_atoms(&self) -> bool {
        match self {
            DurationLaw::Deterministic { .. } | DurationLaw::Empirical { .. } => true,
            DurationLaw::Tabulated { survival, .. } => survival[0] < 1.0,
            DurationLaw::Sum { first, second } => first.has_atoms() && second.has_atoms(),
            DurationLaw::Mixture { components } => components.iter().any(|c| c.law.has_atoms()),
            _ => false,
        }
    }

    /// Lebesgue density, `None` for laws with atoms.
    pub fn density(&self, x: f64) -> Option<f64> {
        if self.has_atoms() {
            return None;
        }
        if x < 0.0 {
            return Some(0.0);
        }
        Some(match self {
            DurationLaw::Exponential { rate } => rate * (-rate * x).exp(),
            DurationLaw::Gamma { shape, scale } => {
                if x == 0.0 {
                    if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    }
                } else {
                    ((shape - 1.0) * x.ln() - x / scale - ln_gamma(*shape) - shape * scale.ln())
                        .exp()
                }
            }
            DurationLaw::Uniform { low, high } => {
                if x >= *low && x <= *high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            DurationLaw::ShiftedBeta { offset, span } => {
                let y = (x - offset) / span;
                if (0.0..=1.0).contains(&y) {
                    6.0 * y * (1.0 - y) / span
                } else {
                    0.0
                }
            }
            DurationLaw::Tabulated { step, survival } => {
                let k = (x / step).floor() as usize;
                if k + 1 >= survival.len() {
                    0.0
                } else {
                    (survival[k] - survival[k + 1]) / step
                }
            }
            DurationLaw::Sum { first, second } => {
                if !first.has_atoms() {
                    second.expect_upto(x, |b| first.density(x - b).unwrap_or(0.0))
                } else {
                    first.expect_upto(x, |a| second.density(x - a).unwrap_or(0.0))
                }
            }
            DurationLaw::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.law.density(x).unwrap_or(0.0))
                .sum(),
            DurationLaw::Deterministic { .. } | DurationLaw::Empirical { .. } => unreachable!(),
        })
    }

    /// Hazard rate `f / F^c`, `None` when no density exists.
    pub fn hazard(&self, x: f64) -> Option<f64> {
        let f = self.density(x)?;
        let s = self.survival(x);
        Some(if s > 0.0 { f / s } else { f64::INFINITY })
    }

    pub fn mean(&self) -> f64 {
        match self {
            DurationLaw::Exponential { rate } => 1.0 / rate,
            DurationLaw::Deterministic { value } => *value,
            DurationLaw::Gamma { shape, scale } => shape * scale,
            DurationLaw::Uniform { low, high } => 0.5 * (low + high),
            DurationLaw::ShiftedBeta { offset, span } => offset + 0.5 * span,
            DurationLaw::Empirical { values, weights } => {
                values.iter().zip(weights).map(|(v, w)| v * w).sum()
            }
            DurationLaw::Tabulated { step, survival } => crate::quadrature::trapezoid(survival, *step),
            DurationLaw::Sum { first, second } => first.mean() + second.mean(),
            DurationLaw::Mixture { components } => {
                components.iter().map(|c| c.weight * c.law.mean()).sum()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            DurationLaw::Exponential { rate } => 2.0 / (rate * rate),
            DurationLaw::Deterministic { value } => value * value,
            DurationLaw::Gamma { shape, scale } => shape * (shape + 1.0) * scale * scale,
            DurationLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            DurationLaw::ShiftedBeta { offset, span } => {
                offset * offset + offset * span + 0.3 * span * span
            }
            DurationLaw::Empirical { values, weights } => {
                values.iter().zip(weights).map(|(v, w)| v * v * w).sum()
            }
            DurationLaw::Sum { first, second } => {
                first.second_moment() + 2.0 * first.mean() * second.mean() + second.second_moment()
            }
            DurationLaw::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.law.second_moment())
                .sum(),
            DurationLaw::Tabulated { .. } => self.expect(|x| x * x),
        }
    }

    /// Smallest point of the support.
    pub fn lower_bound(&self) -> f64 {
        match self {
            DurationLaw::Deterministic { value } => *value,
            DurationLaw::Uniform { low, .. } => *low,
            DurationLaw::ShiftedBeta { offset, .. } => *offset,
            DurationLaw::Empirical { values, .. } => {
                values.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            DurationLaw::Sum { first, second } => first.lower_bound() + second.lower_bound(),
            DurationLaw::Mixture { components } => components
                .iter()
                .map(|c| c.law.lower_bound())
                .fold(f64::INFINITY, f64::min),
            _ => 0.0,
        }
    }

    /// Largest point of the support, `None` when unbounded.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            DurationLaw::Exponential { .. } | DurationLaw::Gamma { .. } => None,
            DurationLaw::Deterministic { value } => Some(*value),
            DurationLaw::Uniform { high, .. } => Some(*high),
            DurationLaw::ShiftedBeta { offset, span } => Some(offset + span),
            DurationLaw::Empirical { values, .. } => {
                Some(values.iter().cloned().fold(0.0, f64::max))
            }
            DurationLaw::Tabulated { step, survival } => {
                Some(step * (survival.len() - 1) as f64)
            }
            DurationLaw::Sum { first, second } => {
                Some(first.upper_bound()? + second.upper_bound()?)
            }
            DurationLaw::Mixture { components } => {
                let mut hi: f64 = 0.0;
                for c in components {
                    hi = hi.max(c.law.upper_bound()?);
                }
                Some(hi)
            }
        }
    }

    /// First time past which the survival is below `eps`, capped at `1e4`.
    pub fn truncation_horizon(&self, eps: f64) -> f64 {
        match self.upper_bound() {
            Some(b) => b,
            None => match self {
                DurationLaw::Exponential { rate } => (-eps.ln() / rate).min(1e4),
                _ => self.quantile(1.0 - eps).min(1e4),
            },
        }
    }

    /// `int_{[0, t]} f dP`.
    pub fn expect_upto(&self, t: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.expect_upto_dyn(t, &f)
    }

    fn expect_upto_dyn(&self, t: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            DurationLaw::Deterministic { value } => {
                if *value <= t {
                    f(*value)
                } else {
                    0.0
                }
            }
            DurationLaw::Empirical { values, weights } => values
                .iter()
                .zip(weights)
                .filter(|(v, _)| **v <= t)
                .map(|(v, w)| w * f(*v))
                .sum(),
            DurationLaw::Tabulated { step, survival } => {
                let mut acc = (1.0 - survival[0]) * f(0.0);
                let cells = survival.len() - 1;
                let (x, w) = crate::quadrature::gauss_legendre(4);
                for k in 0..cells {
                    let a = k as f64 * step;
                    if a >= t {
                        break;
                    }
                    let b = ((k + 1) as f64 * step).min(t);
                    let dens = (survival[k] - survival[k + 1]) / step;
                    if dens == 0.0 {
                        continue;
                    }
                    let mid = 0.5 * (a + b);
                    let half = 0.5 * (b - a);
                    for (xi, wi) in x.iter().zip(&w) {
                        acc += dens * half * wi * f(mid + half * xi);
                    }
                }
                acc
            }
            DurationLaw::Sum { first, second } => {
                second.expect_upto_dyn(t, &|b| first.expect_upto_dyn(t - b, &|a| f(a + b)))
            }
            DurationLaw::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.law.expect_upto_dyn(t, f))
                .sum(),
            _ => {
                let lo = self.lower_bound();
                let hi = self
                    .upper_bound()
                    .unwrap_or_else(|| self.truncation_horizon(TAIL_EPS))
                    .min(t);
                if hi <= lo {
                    return 0.0;
                }
                let rule = self.density_rule(lo, hi);
                rule.into_iter()
                    .map(|(x, w)| w * self.density(x).unwrap_or(0.0) * f(x))
                    .sum()
            }
        }
    }

    /// Quadrature nodes and probability weights representing the whole law
    /// (tails truncated at the usual horizon); `None` for sums, whose
    /// product rules would be too large.
    pub fn rule(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            DurationLaw::Deterministic { value } => Some(vec![(*value, 1.0)]),
            DurationLaw::Empirical { values, weights } => {
                Some(values.iter().cloned().zip(weights.iter().cloned()).collect())
            }
            DurationLaw::Tabulated { step, survival } => {
                let mut r = vec![(0.0, 1.0 - survival[0])];
                let (x, w) = crate::quadrature::gauss_legendre(4);
                for k in 0..survival.len() - 1 {
                    let dens = (survival[k] - survival[k + 1]) / step;
                    if dens == 0.0 {
                        continue;
                    }
                    let mid = (k as f64 + 0.5) * step;
                    for (xi, wi) in x.iter().zip(&w) {
                        r.push((mid + 0.5 * step * xi, dens * 0.5 * step * wi));
                    }
                }
                Some(r)
            }
            DurationLaw::Sum { .. } => None,
            DurationLaw::Mixture { components } => {
                let mut r = Vec::new();
                for c in components {
                    r.extend(c.law.rule()?.into_iter().map(|(x, w)| (x, c.weight * w)));
                }
                Some(r)
            }
            _ => {
                let lo = self.lower_bound();
                let hi = self
                    .upper_bound()
                    .unwrap_or_else(|| self.truncation_horizon(TAIL_EPS));
                Some(
                    self.density_rule(lo, hi)
                        .into_iter()
                        .map(|(x, w)| (x, w * self.density(x).unwrap_or(0.0)))
                        .collect(),
                )
            }
        }
    }

    fn density_rule(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        if let DurationLaw::Gamma { shape, scale } = self {
            if shape.fract() != 0.0 || *shape < 1.0 {
                // graded panels resolve the x^(shape-1) behaviour at 0
                let split = (shape * scale).min(hi);
                let mut r = graded_rule(lo, split, 48);
                r.extend(composite_rule(split, hi, QUAD_PANELS));
                return r;
            }
        }
        composite_rule(lo, hi, QUAD_PANELS)
    }

    /// `E[f(X)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.expect_upto_dyn(f64::INFINITY, &f)
    }

    /// Laplace transform `E[exp(-s X)]`, `None` when it diverges.
    pub fn laplace(&self, s: f64) -> Option<f64> {
        match self {
            DurationLaw::Exponential { rate } => {
                if rate + s > 0.0 {
                    Some(rate / (rate + s))
                } else {
                    None
                }
            }
            DurationLaw::Gamma { shape, scale } => {
                let base = 1.0 + s * scale;
                if base > 0.0 {
                    Some(base.powf(-shape))
                } else {
                    None
                }
            }
            DurationLaw::Deterministic { value } => Some((-s * value).exp()),
            DurationLaw::Uniform { low, high } => {
                let d = high - low;
                if (s * d).abs() < 1e-8 {
                    Some((-s * 0.5 * (low + high)).exp())
                } else {
                    Some(((-s * low).exp() - (-s * high).exp()) / (s * d))
                }
            }
            DurationLaw::Sum { first, second } => Some(first.laplace(s)? * second.laplace(s)?),
            DurationLaw::Mixture { components } => {
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight * c.law.laplace(s)?;
                }
                Some(acc)
            }
            _ => Some(self.expect(|x| (-s * x).exp())),
        }
    }

    /// `int_0^inf F^c(t) exp(-s t) dt`, `None` when it diverges.
    pub fn survival_laplace(&self, s: f64) -> Option<f64> {
        if s.abs() < 1e-7 {
            return Some(self.mean() - 0.5 * s * self.second_moment());
        }
        Some((1.0 - self.laplace(s)?) / s)
    }

    /// Quantile function, the generalized inverse of the CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            DurationLaw::Exponential { rate } => -(-u).ln_1p() / rate,
            DurationLaw::Deterministic { value } => *value,
            DurationLaw::Uniform { low, high } => low + u * (high - low),
            DurationLaw::ShiftedBeta { offset, span } => offset + span * beta22_quantile(u),
            DurationLaw::Empirical { values, weights } => {
                let mut idx: Vec<usize> = (0..values.len()).collect();
                idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
                let mut acc = 0.0;
                for i in &idx {
                    acc += weights[*i];
                    if acc >= u - 1e-15 && weights[*i] > 0.0 {
                        return values[*i];
                    }
                }
                values[*idx.last().unwrap()]
            }
            DurationLaw::Tabulated { step, survival } => {
                let target = 1.0 - u;
                if target >= survival[0] {
                    return 0.0;
                }
                for k in 0..survival.len() - 1 {
                    if survival[k + 1] <= target {
                        let d = survival[k] - survival[k + 1];
                        let w = if d > 0.0 { (survival[k] - target) / d } else { 0.0 };
                        return (k as f64 + w) * step;
                    }
                }
                step * (survival.len() - 1) as f64
            }
            _ => self.bisect_quantile(u),
        }
    }

    fn bisect_quantile(&self, u: f64) -> f64 {
        let mut lo = self.lower_bound();
        let mut hi = match self.upper_bound() {
            Some(b) => b,
            None => {
                let mut h = (self.mean() * 2.0).max(1e-6);
                while self.cdf(h) < u && h < 1e6 {
                    h *= 2.0;
                }
                h
            }
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * hi.max(1.0) {
                break;
            }
        }
        hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DurationLaw::Exponential { rate } => -open_unit(rng).ln() / rate,
            DurationLaw::Deterministic { value } => *value,
            DurationLaw::Gamma { shape, scale } => Gamma::new(*shape, *scale)
                .expect("validated gamma parameters")
                .sample(rng),
            DurationLaw::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
            DurationLaw::ShiftedBeta { offset, span } => {
                offset + span * beta22_quantile(rng.gen::<f64>())
            }
            DurationLaw::Sum { first, second } => first.sample(rng) + second.sample(rng),
            DurationLaw::Mixture { components } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.law.sample(rng);
                    }
                }
                components.last().unwrap().law.sample(rng)
            }
            _ => self.quantile(rng.gen::<f64>()),
        }
    }

    /// Draws `X - age` conditionally on `X > age`.
    pub fn sample_residual<R: Rng + ?Sized>(&self, age: f64, rng: &mut R) -> Result<f64> {
        if age <= 0.0 {
            return Ok(self.sample(rng));
        }
        let s = self.survival(age);
        if s <= 0.0 {
            return Err(invalid(format!("no mass beyond age {age}")));
        }
        match self {
            DurationLaw::Exponential { .. } => Ok(self.sample(rng)),
            DurationLaw::Deterministic { value } => Ok(value - age),
            _ => {
                let u = 1.0 - s * open_unit(rng);
                Ok((self.quantile(u) - age).max(0.0))
            }
        }
    }

    /// Law of the residual time of a renewal process in equilibrium,
    /// with survival `mu * int_x^inf F^c`.
    pub fn equilibrium_excess(&self) -> DurationLaw {
        match self {
            DurationLaw::Exponential { .. } => self.clone(),
            DurationLaw::Deterministic { value } => DurationLaw::Uniform {
                low: 0.0,
                high: *value,
            },
            _ => {
                let end = self.truncation_horizon(1e-12);
                let n = 4000usize;
                let step = end / n as f64;
                let sc: Vec<f64> = (0..=n).map(|k| self.survival(k as f64 * step)).collect();
                let mut tail = vec![0.0; n + 1];
                for k in (0..n).rev() {
                    tail[k] = tail[k + 1] + 0.5 * step * (sc[k] + sc[k + 1]);
                }
                let total = tail[0];
                DurationLaw::Tabulated {
                    step,
                    survival: tail.into_iter().map(|v| v / total).collect(),
                }
            }
        }
    }
}

/// Composite rule with panels graded towards the left endpoint, for
/// integrable singularities there.
fn graded_rule(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let ratio: f64 = 1.3;
    let total: f64 = (0..panels).map(|k| ratio.powi(k as i32)).sum();
    let mut lo = a;
    for k in 0..panels {
        let width = (b - a) * ratio.powi(k as i32) / total;
        out.extend(composite_rule(lo, lo + width, 1));
        lo += width;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn laws() -> Vec<DurationLaw> {
        vec![
            DurationLaw::exponential(1.5),
            DurationLaw::deterministic(2.0),
            DurationLaw::gamma(2.5, 0.8),
            DurationLaw::uniform(1.0, 3.0),
            DurationLaw::shifted_beta(2.0, 2.0),
            DurationLaw::Empirical {
                values: vec![1.0, 2.0, 4.0],
                weights: vec![0.2, 0.5, 0.3],
            },
            DurationLaw::sum(DurationLaw::shifted_beta(2.0, 2.0), DurationLaw::shifted_beta(3.0, 1.0)),
            DurationLaw::mixture(vec![
                (0.3, DurationLaw::exponential(1.0)),
                (0.7, DurationLaw::uniform(0.0, 2.0)),
            ]),
        ]
    }

    #[test]
    fn shifted_exponential_sum_is_exact() {
        let law = DurationLaw::sum(DurationLaw::deterministic(0.3), DurationLaw::exponential(1.5));
        for t in [0.1, 0.31, 0.5, 1.0, 3.0] {
            let exact = if t < 0.3 { 1.0 } else { (-1.5f64 * (t - 0.3)).exp() };
            assert!((law.survival(t) - exact).abs() < 1e-14, "{t}");
        }
    }

    #[test]
    fn beta22_quantile_inverts_cdf() {
        for k in 0..=20 {
            let u = k as f64 / 20.0;
            assert!((beta22_cdf(beta22_quantile(u)) - u).abs() < 1e-13);
        }
    }

    #[test]
    fn means_match_quadrature() {
        for law in laws() {
            law.validate().unwrap();
            let m = law.expect(|x| x);
            assert!((m - law.mean()).abs() < 1e-8, "{law:?}: {m} vs {}", law.mean());
            let total = law.expect(|_| 1.0);
            assert!((total - 1.0).abs() < 1e-8, "{law:?}: mass {total}");
        }
    }

    #[test]
    fn rules_carry_unit_mass_and_the_mean() {
        for law in laws() {
            if let Some(r) = law.rule() {
                let mass: f64 = r.iter().map(|(_, w)| w).sum();
                let mean: f64 = r.iter().map(|(x, w)| x * w).sum();
                assert!((mass - 1.0).abs() < 1e-8, "{law:?}");
                assert!((mean - law.mean()).abs() < 1e-8, "{law:?}");
            }
        }
    }

    #[test]
    fn laplace_matches_quadrature() {
        for law in laws() {
            let s = 0.3;
            let exact = law.laplace(s).unwrap();
            let quad = law.expect(|x| (-s * x).exp());
            assert!((exact - quad).abs() < 1e-8, "{law:?}");
        }
        assert!(DurationLaw::exponential(1.0).laplace(-1.5).is_none());
    }

    #[test]
    fn quantile_inverts_continuous_cdf() {
        for law in laws().into_iter().filter(|l| !l.has_atoms()) {
            for u in [0.1, 0.5, 0.9] {
                let x = law.quantile(u);
                assert!((law.cdf(x) - u).abs() < 1e-7, "{law:?} at {u}");
            }
        }
    }

    #[test]
    fn sample_means_are_consistent() {
        for (i, law) in laws().into_iter().enumerate() {
            let mut rng = stream(11, Domain::Panel, i as u64);
            let n = 40_000;
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = law.second_moment() - law.mean().powi(2);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - law.mean()).abs() < 4.0 * se + 1e-12,
                "{law:?}: {mean} vs {}",
                law.mean()
            );
        }
    }

    #[test]
    fn residual_of_deterministic_and_uniform() {
        let mut rng = stream(3, Domain::Panel, 0);
        let d = DurationLaw::deterministic(5.0);
        assert_eq!(d.sample_residual(2.0, &mut rng).unwrap(), 3.0);
        let u = DurationLaw::uniform(0.0, 4.0);
        for _ in 0..100 {
            let r = u.sample_residual(3.0, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&r));
        }
        assert!(d.sample_residual(6.0, &mut rng).is_err());
    }

    #[test]
    fn equilibrium_excess_of_gamma_has_expected_mean() {
        let g = DurationLaw::gamma(2.0, 1.0);
        let e = g.equilibrium_excess();
        let expected = g.second_moment() / (2.0 * g.mean());
        assert!((e.mean() - expected).abs() < 1e-4);
        assert_eq!(
            DurationLaw::deterministic(3.0).equilibrium_excess(),
            DurationLaw::uniform(0.0, 3.0)
        );
    }

    #[test]
    fn survival_left_sees_atoms() {
        let d = DurationLaw::deterministic(1.0);
        assert_eq!(d.survival(1.0), 0.0);
        assert_eq!(d.survival_left(1.0), 1.0);
        assert_eq!(d.survival_mid(1.0), 0.5);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(DurationLaw::exponential(-1.0).validate().is_err());
        assert!(DurationLaw::uniform(2.0, 1.0).validate().is_err());
        assert!(DurationLaw::Empirical { values: vec![1.0], weights: vec![0.5] }
            .validate()
            .is_err());
    }
}
