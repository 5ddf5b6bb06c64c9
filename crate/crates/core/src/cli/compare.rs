//! Response of a Markov and a non-Markov epidemic to the same drop in
//! contacts, both calibrated to the same growth and decay rates.

use serde::Serialize;

use super::config::CompareConfig;
use crate::analytics::early_phase_profile;
use crate::error::{invalid, Result};
use crate::laws::{DurationLaw, InfectivityLaw};
use crate::mesh::TimeMesh;
use crate::volterra::kernels::survival_nodes;
use crate::volterra::{solve_vi_curves, ContactSchedule, LimitSolution, SolveOptions, ViCurves};

/// Mean exposed period 3 days and mean infectious period 5 days; the
/// Markov side has exponential periods, the other side bounded ones.
pub fn default_compare_config() -> CompareConfig {
    CompareConfig {
        intervention_day: 28.0,
        growth_rate: std::f64::consts::LN_2 / 3.0,
        decay_rate: -0.05,
        initial_fraction: 1e-4,
        markov: InfectivityLaw::Latent {
            rate: 1.0,
            latency: DurationLaw::exponential(1.0 / 3.0),
            period: DurationLaw::exponential(0.2),
        },
        nonmarkov: InfectivityLaw::Latent {
            rate: 1.0,
            latency: DurationLaw::shifted_beta(2.0, 2.0),
            period: DurationLaw::shifted_beta(3.0, 4.0),
        },
    }
}

/// `law` with its infectivity multiplied by `c`.
fn scaled(law: &InfectivityLaw, c: f64) -> InfectivityLaw {
    let mut out = law.clone();
    match &mut out {
        InfectivityLaw::Constant { rate, .. } | InfectivityLaw::Latent { rate, .. } => *rate *= c,
        InfectivityLaw::Covid(p) => p.scale *= c,
    }
    out
}

/// Factor that makes `law` grow at `rho`.
fn rate_factor(law: &InfectivityLaw, rho: f64) -> Result<f64> {
    law.laplace(rho)
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(|v| 1.0 / v)
        .ok_or_else(|| invalid(format!("E[lambda] has no Laplace transform at {rho}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSide {
    /// Recalibrated law.
    pub law: InfectivityLaw,
    pub r0: f64,
    /// Contact factor applied from the intervention day.
    pub contact_factor: f64,
    pub solution: LimitSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub intervention_day: f64,
    pub times: Vec<f64>,
    pub markov: CompareSide,
    pub nonmarkov: CompareSide,
    /// Non-Markov minus Markov cumulative infections.
    pub gap: Vec<f64>,
}

impl CompareReport {
    pub fn final_gap(&self) -> f64 {
        *self.gap.last().expect("nonempty mesh")
    }

    /// First time from which the gap stays positive, if any.
    pub fn positive_from(&self) -> Option<f64> {
        let last_bad = self.gap.iter().rposition(|g| *g <= 0.0);
        match last_bad {
            None => self.times.first().copied(),
            Some(k) if k + 1 < self.times.len() => Some(self.times[k + 1]),
            Some(_) => None,
        }
    }
}

fn run_side(
    cfg: &CompareConfig,
    law: &InfectivityLaw,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<CompareSide> {
    law.validate()?;
    let law = scaled(law, rate_factor(law, cfg.growth_rate)?);
    let contact_factor = rate_factor(&law, cfg.decay_rate)?;
    let (n, h) = (mesh.nodes(), mesh.step());
    let profile = early_phase_profile(&law, cfg.growth_rate, h, n)?;
    let eps = cfg.initial_fraction;
    let infected = eps * profile.i;
    let curves = ViCurves {
        kernel: law.mean_curve_exact(h, n).values,
        initial_force: profile.lambda_rho.values.iter().map(|v| infected * v).collect(),
        survival: survival_nodes(&law.period_law(), n, h),
        initial_survival: profile.survival_rho.values.clone(),
        susceptible: 1.0 - eps,
        infected,
        recovered: eps * profile.r,
    };
    let opts = SolveOptions {
        contact: Some(ContactSchedule::step(cfg.intervention_day, contact_factor)),
        ..opts.clone()
    };
    let solution = solve_vi_curves(&curves, mesh, &opts)?;
    Ok(CompareSide {
        r0: law.r0(),
        law,
        contact_factor,
        solution,
    })
}

/// Runs both sides of `cfg` on `mesh`.
pub fn compare(cfg: &CompareConfig, mesh: &TimeMesh, opts: &SolveOptions) -> Result<CompareReport> {
    if !(cfg.growth_rate > 0.0 && cfg.growth_rate.is_finite()) {
        return Err(invalid("compare needs a positive pre-intervention growth rate"));
    }
    if !(cfg.decay_rate < cfg.growth_rate && cfg.decay_rate.is_finite()) {
        return Err(invalid("the post-intervention rate must be below the growth rate"));
    }
    if !(cfg.intervention_day > 0.0 && cfg.intervention_day < mesh.horizon()) {
        return Err(invalid("the intervention must fall inside the horizon"));
    }
    if !(cfg.initial_fraction > 0.0 && cfg.initial_fraction < 1.0) {
        return Err(invalid("initial_fraction must lie in (0, 1)"));
    }
    let markov = run_side(cfg, &cfg.markov, mesh, opts)?;
    let nonmarkov = run_side(cfg, &cfg.nonmarkov, mesh, opts)?;
    let gap = nonmarkov
        .solution
        .cumulative()
        .iter()
        .zip(markov.solution.cumulative())
        .map(|(a, b)| a - b)
        .collect();
    Ok(CompareReport {
        intervention_day: cfg.intervention_day,
        times: mesh.times(),
        markov,
        nonmarkov,
        gap,
    })
}
