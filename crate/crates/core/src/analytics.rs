//! Closed-form and root-finding quantities: growth rates, reproduction
//! numbers, early-phase profiles, equilibria of the Markov models, the
//! critical population size and the SIS quasi-potential.

use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::abm::Dynamics;
use crate::error::{invalid, Error, Result};
use crate::laws::{DurationLaw, InfectivityLaw};
use crate::mesh::Curve;
use crate::quadrature::integrate;

const RHO_START: f64 = 10.0;
const RHO_LIMIT: f64 = 1e3;
const LAPLACE_TOL: f64 = 1e-10;

/// Root of the decreasing map `rho -> laplace(rho) = 1`, where `None`
/// stands for a divergent transform.
fn solve_unit_laplace(laplace: impl Fn(f64) -> Option<f64>) -> Result<f64> {
    let value = |rho: f64| laplace(rho).unwrap_or(f64::INFINITY);
    let r0 = value(0.0);
    if !r0.is_finite() {
        return Err(invalid("the basic reproduction number is not finite"));
    }
    if (r0 - 1.0).abs() <= 1e-12 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-RHO_START, RHO_START);
    while value(hi) > 1.0 {
        hi *= 2.0;
        if hi > RHO_LIMIT {
            return Err(Error::NoBracket(format!(
                "growth rate above {RHO_LIMIT} (R0 = {r0})"
            )));
        }
    }
    while value(lo) < 1.0 {
        lo *= 2.0;
        if lo < -RHO_LIMIT {
            return Err(Error::NoBracket(format!(
                "growth rate below -{RHO_LIMIT} (R0 = {r0})"
            )));
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let v = value(mid);
        if (v - 1.0).abs() < LAPLACE_TOL || hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
        if v > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Malthusian growth rate: the `rho` with `int lambda_bar(t) e^{-rho t} dt = 1`.
/// Returns exactly 0 when `R0 = 1` within `1e-12`.
pub fn growth_rate(law: &InfectivityLaw) -> Result<f64> {
    law.validate()?;
    solve_unit_laplace(|rho| law.laplace(rho))
}

/// Growth rate of a tabulated mean infectivity (zero past the last node).
pub fn growth_rate_of_curve(mean: &Curve) -> Result<f64> {
    if mean.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(invalid("mean infectivity must be finite and nonnegative"));
    }
    let h = mean.step;
    solve_unit_laplace(|rho| {
        let weighted: Vec<f64> = mean
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v * (-rho * k as f64 * h).exp())
            .collect();
        let v = crate::quadrature::trapezoid(&weighted, h);
        v.is_finite().then_some(v)
    })
}

/// `R0 = (int g(t) e^{-rho t} dt)^{-1}` for a generation-interval density
/// `g` supported in `[0, horizon]` with unit mass.
pub fn r0_from_rho(g: impl Fn(f64) -> f64, horizon: f64, rho: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    // `t = horizon v^2` tames square-root behaviour at the origin.
    let rule = crate::quadrature::composite_rule(0.0, 1.0, 4000);
    let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
        rule.iter()
            .map(|(v, w)| {
                let t = horizon * v * v;
                w * 2.0 * horizon * v * f(t)
            })
            .sum()
    };
    let mass = integrate(&g);
    if (mass - 1.0).abs() > 1e-8 {
        return Err(invalid(format!(
            "generation-interval density has mass {mass}, not 1"
        )));
    }
    let weighted = integrate(&|t| g(t) * (-rho * t).exp());
    Ok(1.0 / weighted)
}

/// `int_t^inf F^c(u) e^{-rho u} du`; closed form for exponential and gamma
/// laws, so that tails are exact when `rho < 0`.
pub fn survival_tail(law: &DurationLaw, t: f64, rho: f64) -> Option<f64> {
    let t = t.max(0.0);
    match law {
        DurationLaw::Exponential { rate } => {
            (rate + rho > 0.0).then(|| (-(rate + rho) * t).exp() / (rate + rho))
        }
        DurationLaw::Gamma { shape, scale } if rho.abs() > 1e-6 => {
            let base = 1.0 + rho * scale;
            if base <= 0.0 {
                return None;
            }
            let upper = |x: f64| if x <= 0.0 { 1.0 } else { gamma_ur(*shape, x) };
            let head = (-rho * t).exp() * upper(t / scale);
            let tail = base.powf(-shape) * upper(t * base / scale);
            Some((head - tail) / rho)
        }
        DurationLaw::Sum { first, second } => {
            // E[e^{-rho X} int_{t-X}^{Y} e^{-rho v} dv], split at v = 0
            let v = first.expect(|x| {
                let s = t - x;
                let head = if s >= 0.0 {
                    0.0
                } else if rho == 0.0 {
                    -s
                } else {
                    (-rho * s).exp_m1() / rho
                };
                let tail = survival_tail(second, s, rho).unwrap_or(f64::INFINITY);
                (-rho * x).exp() * (head + tail)
            });
            v.is_finite().then_some(v)
        }
        DurationLaw::Mixture { components } => {
            let mut acc = 0.0;
            for c in components {
                acc += c.weight * survival_tail(&c.law, t, rho)?;
            }
            Some(acc)
        }
        _ => {
            let v = law.expect(|x| {
                if x <= t {
                    0.0
                } else if rho == 0.0 {
                    x - t
                } else {
                    (-rho * t).exp() * -(-rho * (x - t)).exp_m1() / rho
                }
            });
            v.is_finite().then_some(v)
        }
    }
}

/// `int_t^inf lambda_bar(u) e^{-rho u} du`.
fn infectivity_tail(law: &InfectivityLaw, t: f64, rho: f64) -> Option<f64> {
    match law {
        InfectivityLaw::Constant { rate, period } => Some(rate * survival_tail(period, t, rho)?),
        InfectivityLaw::Latent {
            rate,
            latency,
            period,
        } => {
            let v = latency.expect(|xi| {
                (-rho * xi).exp() * survival_tail(period, t - xi, rho).unwrap_or(f64::INFINITY)
            });
            v.is_finite().then_some(rate * v)
        }
        InfectivityLaw::Covid(_) => {
            let end = law.truncation_horizon(1e-14);
            if t >= end {
                return Some(0.0);
            }
            let panels = (((end - t) * 20.0).ceil() as usize).max(8);
            Some(integrate(t, end, panels, |u| law.mean(u) * (-rho * u).exp()))
        }
    }
}

/// Stable-growth initial condition of the linearized model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EarlyPhaseProfile {
    pub rho: f64,
    /// `int F^c(s) rho e^{-rho s} ds`.
    pub i: f64,
    /// `1 - i`.
    pub r: f64,
    /// `lambda_bar_rho(t) = int lambda_bar(t + s) e^{-rho s} ds / int F^c(s) e^{-rho s} ds`.
    pub lambda_rho: Curve,
    /// `F^c_rho(t) = int F^c(t + s) e^{-rho s} ds / int F^c(s) e^{-rho s} ds`.
    pub survival_rho: Curve,
}

/// Profile of initial infectivity and remaining periods under which the
/// linearized system grows exactly like `e^{rho t}`, tabulated on `nodes`
/// points of spacing `step`.
pub fn early_phase_profile(
    law: &InfectivityLaw,
    rho: f64,
    step: f64,
    nodes: usize,
) -> Result<EarlyPhaseProfile> {
    law.validate()?;
    if rho == 0.0 || !rho.is_finite() {
        return Err(invalid("the early-phase profile needs a nonzero growth rate"));
    }
    if !(step > 0.0) || nodes == 0 {
        return Err(invalid("step and node count must be positive"));
    }
    let period = law.period_law();
    let diverges = || invalid(format!("E[exp(-rho eta)] diverges at rho = {rho}"));
    let denom = survival_tail(&period, 0.0, rho).ok_or_else(diverges)?;
    let i = rho * denom;
    let mut lam = Vec::with_capacity(nodes);
    let mut surv = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let t = k as f64 * step;
        let growth = (rho * t).exp();
        lam.push(growth * infectivity_tail(law, t, rho).ok_or_else(diverges)? / denom);
        surv.push(growth * survival_tail(&period, t, rho).ok_or_else(diverges)? / denom);
    }
    Ok(EarlyPhaseProfile {
        rho,
        i,
        r: 1.0 - i,
        lambda_rho: Curve::new(step, lam),
        survival_rho: Curve::new(step, surv),
    })
}

/// Equilibrium fractions of a Markov model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub r0: f64,
    pub susceptible: f64,
    pub infected: f64,
    pub recovered: f64,
}

/// Stable equilibrium of the SIS, SIRS and SIR-with-demography ODEs: the
/// endemic point when `R0 > 1`, the disease-free point otherwise.
pub fn markov_equilibria(dynamics: &Dynamics) -> Result<Equilibrium> {
    let eq = |r0: f64, s: f64, i: f64| Equilibrium {
        r0,
        susceptible: s,
        infected: i,
        recovered: (1.0 - s - i).max(0.0),
    };
    let positive = |xs: &[f64]| {
        if xs.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(invalid("rates must be positive"))
        }
    };
    match *dynamics {
        Dynamics::MarkovSis {
            infection_rate: l,
            recovery_rate: g,
        } => {
            positive(&[l, g])?;
            let r0 = l / g;
            let i = if r0 > 1.0 { 1.0 - g / l } else { 0.0 };
            Ok(eq(r0, 1.0 - i, i))
        }
        Dynamics::MarkovSirs {
            infection_rate: l,
            recovery_rate: g,
            immunity_loss_rate: w,
        } => {
            positive(&[l, g, w])?;
            let r0 = l / g;
            if r0 > 1.0 {
                Ok(eq(r0, g / l, (1.0 - 1.0 / r0) * w / (g + w)))
            } else {
                Ok(eq(r0, 1.0, 0.0))
            }
        }
        Dynamics::MarkovSirDemography {
            infection_rate: l,
            recovery_rate: g,
            birth_death_rate: m,
        } => {
            positive(&[l, g, m])?;
            let r0 = l / (g + m);
            if r0 > 1.0 {
                Ok(eq(r0, (g + m) / l, (1.0 - 1.0 / r0) * m / (g + m)))
            } else {
                Ok(eq(r0, 1.0, 0.0))
            }
        }
        ref other => Err(invalid(format!(
            "no endemic equilibrium formula for {}",
            other.name()
        ))),
    }
}

/// Population size below which an endemic disease with basic reproduction
/// number `r0`, recovery rate `gamma` and birth/death rate `mu` tends to go
/// extinct between epidemic waves:
/// `9 / (eps^2 (1 - 1/R0)^2 R0)` with `eps = mu / (gamma + mu)`.
pub fn critical_population_size(r0: f64, gamma: f64, mu: f64) -> Result<f64> {
    if !(r0 > 1.0 && r0.is_finite()) {
        return Err(invalid("the critical population size needs R0 > 1"));
    }
    if !(gamma > 0.0 && mu > 0.0) {
        return Err(invalid("rates must be positive"));
    }
    let eps = mu / (gamma + mu);
    let excess = 1.0 - 1.0 / r0;
    Ok(9.0 / (eps * eps * excess * excess * r0))
}

/// Quasi-potential of the SIS endemic state, `log R0 - 1 + 1/R0`; the
/// extinction time grows like `exp(N V)`.
pub fn sis_quasipotential(r0: f64) -> Result<f64> {
    if !(r0 >= 1.0 && r0.is_finite()) {
        return Err(invalid("the SIS quasi-potential needs R0 >= 1"));
    }
    Ok(r0.ln() - 1.0 + 1.0 / r0)
}
