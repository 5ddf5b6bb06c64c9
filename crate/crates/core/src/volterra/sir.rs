//! SIR, SEIR and varying-infectivity Volterra limits.

use super::kernels::{
    age_rule, conv_all, cumulative, initial_survival, mid_nodes, survival_nodes,
};
use super::renewal::Renewal;
use super::{ContactSchedule, LimitSolution, SolveOptions};
use crate::abm::{Dynamics, InitialCondition, ModelSpec};
use crate::error::{invalid, Result};
use crate::laws::{DurationLaw, InfectivityLaw, JointLaw};
use crate::mesh::{Curve, TimeMesh};

/// Tabulated inputs of the varying-infectivity system on a mesh.
///
/// `kernel` is the mean infectivity of a new infection (jump nodes carry
/// the average of the one-sided limits), `initial_force` the force exerted
/// by the initially infected, `survival` the infectious-period survival
/// used as kernel, and `initial_survival` the fraction of the initially
/// infected still infectious.
#[derive(Debug, Clone, PartialEq)]
pub struct ViCurves {
    pub kernel: Vec<f64>,
    pub initial_force: Vec<f64>,
    pub survival: Vec<f64>,
    pub initial_survival: Vec<f64>,
    pub susceptible: f64,
    pub infected: f64,
    pub recovered: f64,
}

/// Solves the varying-infectivity system for tabulated kernels.
pub fn solve_vi_curves(
    curves: &ViCurves,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<LimitSolution> {
    let n = mesh.nodes();
    for (name, v) in [
        ("kernel", &curves.kernel),
        ("initial_force", &curves.initial_force),
        ("survival", &curves.survival),
        ("initial_survival", &curves.initial_survival),
    ] {
        if v.len() != n {
            return Err(invalid(format!(
                "{name} has {} values, the mesh has {n} nodes",
                v.len()
            )));
        }
    }
    if let Some(c) = &opts.contact {
        c.validate()?;
    }
    let h = mesh.step();
    let contact = ContactSchedule::on_mesh(opts.contact.as_ref(), mesh);
    let sol = Renewal {
        kernel: &curves.kernel,
        source: &curves.initial_force,
        s0: curves.susceptible,
        contact: &contact,
    }
    .solve(h, opts)?;
    let recovered_kernel: Vec<f64> = curves.survival.iter().map(|x| 1.0 - x).collect();
    let ci = conv_all(&curves.survival, &sol.ups, h);
    let cr = conv_all(&recovered_kernel, &sol.ups, h);
    let i: Vec<f64> = (0..n)
        .map(|k| curves.infected * curves.initial_survival[k] + ci[k])
        .collect();
    let r: Vec<f64> = (0..n)
        .map(|k| curves.recovered + curves.infected * (1.0 - curves.initial_survival[k]) + cr[k])
        .collect();
    let a = cumulative(&sol.ups, h);
    let mut out = LimitSolution::new(
        "varying-infectivity",
        mesh,
        [sol.s, vec![0.0; n], i, r, sol.force, a],
    );
    out.iterations = sol.iterations;
    Ok(out)
}

fn reject_exposed(init: &InitialCondition) -> Result<()> {
    if init.exposed > 0.0 {
        Err(invalid("this family has no exposed compartment"))
    } else {
        Ok(())
    }
}

/// Non-Markov SIR limit, with either a law for the remaining period of the
/// initially infected or an age profile (`initial.age`).
pub fn solve_sir_volterra(
    model: &ModelSpec,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<LimitSolution> {
    model.validate()?;
    let Dynamics::NonmarkovSir {
        infection_rate,
        infectious_period,
        initial_period,
    } = &model.dynamics
    else {
        return Err(invalid("solve_sir_volterra needs the nonmarkov-sir family"));
    };
    let init = &model.initial;
    reject_exposed(init)?;
    let (n, h) = (mesh.nodes(), mesh.step());
    let times = mesh.times();
    let initial = initial_period.as_ref().unwrap_or(infectious_period);
    let f0c = initial_survival(infectious_period, initial, init.age.as_ref(), &times);
    let fc = survival_nodes(infectious_period, n, h);
    let curves = ViCurves {
        kernel: fc.iter().map(|x| infection_rate * x).collect(),
        initial_force: f0c.iter().map(|x| infection_rate * init.infected * x).collect(),
        survival: fc,
        initial_survival: f0c,
        susceptible: init.susceptible,
        infected: init.infected,
        recovered: init.recovered,
    };
    let mut sol = solve_vi_curves(&curves, mesh, opts)?;
    sol.family = "nonmarkov-sir".into();
    Ok(sol)
}

/// Mean infectivity of the initially infected at each time.
pub(crate) fn initial_mean(
    initial: &InfectivityLaw,
    age: Option<&DurationLaw>,
    mesh: &TimeMesh,
) -> Vec<f64> {
    let times = mesh.times();
    match age {
        None => times.iter().map(|t| initial.mean(*t)).collect(),
        Some(a) => {
            // E[lambda(Y + t) | eta > Y] from a tabulated mean on a finer grid
            let rule = age_rule(a);
            let ymax = rule.iter().map(|(y, _)| *y).fold(0.0, f64::max);
            let step = mesh.step() / 4.0;
            let nodes = ((mesh.horizon() + ymax) / step).ceil() as usize + 2;
            let mean = Curve::from_fn(step, nodes, |t| initial.mean(t));
            let period = initial.period_law();
            let alive: Vec<f64> = rule.iter().map(|(y, _)| period.survival(*y)).collect();
            times
                .iter()
                .map(|t| {
                    rule.iter()
                        .zip(&alive)
                        .filter(|(_, p)| **p > 0.0)
                        .map(|((y, w), p)| w * mean.eval(y + t) / p)
                        .sum()
                })
                .collect()
        }
    }
}

/// Varying-infectivity limit: the `(S, F)` renewal system, then `I` and `R`
/// by quadrature.
pub fn solve_vi_volterra(
    model: &ModelSpec,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<LimitSolution> {
    model.validate()?;
    let Dynamics::VaryingInfectivity {
        infectivity,
        initial_infectivity,
    } = &model.dynamics
    else {
        return Err(invalid("solve_vi_volterra needs the varying-infectivity family"));
    };
    let init = &model.initial;
    reject_exposed(init)?;
    let (n, h) = (mesh.nodes(), mesh.step());
    let initial = initial_infectivity.as_ref().unwrap_or(infectivity);
    let kernel = infectivity.mean_curve_exact(h, n).values;
    let lambda0 = initial_mean(initial, init.age.as_ref(), mesh);
    let period = infectivity.period_law();
    let f0c = initial_survival(
        &initial.period_law(),
        &initial.period_law(),
        init.age.as_ref(),
        &mesh.times(),
    );
    let curves = ViCurves {
        kernel,
        initial_force: lambda0.iter().map(|x| init.infected * x).collect(),
        survival: survival_nodes(&period, n, h),
        initial_survival: f0c,
        susceptible: init.susceptible,
        infected: init.infected,
        recovered: init.recovered,
    };
    solve_vi_curves(&curves, mesh, opts)
}

/// Non-Markov SEIR limit built on the kernels `Psi(t) = P(xi <= t < xi +
/// eta)` and `Phi(t) = P(xi + eta <= t)`.
pub fn solve_seir_volterra(
    model: &ModelSpec,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<LimitSolution> {
    model.validate()?;
    let Dynamics::NonmarkovSeir {
        infection_rate,
        periods,
        initial_latency,
        initial_period,
    } = &model.dynamics
    else {
        return Err(invalid("solve_seir_volterra needs the nonmarkov-seir family"));
    };
    let init = &model.initial;
    if init.age.is_some() {
        return Err(invalid(
            "age profiles are supported for the SIR and varying-infectivity families only",
        ));
    }
    let (n, h) = (mesh.nodes(), mesh.step());
    let times = mesh.times();
    let lam = *infection_rate;
    let latency = periods.latency();
    let g0 = initial_latency.clone().unwrap_or_else(|| latency.clone());
    let f0 = initial_period.clone().unwrap_or_else(|| periods.infectious());
    // initially exposed: remaining latency independent of a fresh period
    let h0 = JointLaw::independent(g0.clone(), periods.infectious());
    let jumps = periods.has_atoms();
    let psi = mid_nodes(n, h, jumps, |t| periods.psi(t));
    let phi = mid_nodes(n, h, jumps, |t| periods.phi(t));
    let gc = survival_nodes(&latency, n, h);
    let i_init: Vec<f64> = times
        .iter()
        .map(|t| init.infected * f0.survival(*t) + init.exposed * h0.psi(*t))
        .collect();
    let r_init: Vec<f64> = times
        .iter()
        .map(|t| init.recovered + init.infected * f0.cdf(*t) + init.exposed * h0.phi(*t))
        .collect();
    let kernel: Vec<f64> = psi.iter().map(|x| lam * x).collect();
    let source: Vec<f64> = i_init.iter().map(|x| lam * x).collect();
    if let Some(c) = &opts.contact {
        c.validate()?;
    }
    let contact = ContactSchedule::on_mesh(opts.contact.as_ref(), mesh);
    let sol = Renewal {
        kernel: &kernel,
        source: &source,
        s0: init.susceptible,
        contact: &contact,
    }
    .solve(h, opts)?;
    let ce = conv_all(&gc, &sol.ups, h);
    let ci = conv_all(&psi, &sol.ups, h);
    let cr = conv_all(&phi, &sol.ups, h);
    let e: Vec<f64> = (0..n)
        .map(|k| init.exposed * g0.survival(times[k]) + ce[k])
        .collect();
    let i: Vec<f64> = (0..n).map(|k| i_init[k] + ci[k]).collect();
    let r: Vec<f64> = (0..n).map(|k| r_init[k] + cr[k]).collect();
    let a = cumulative(&sol.ups, h);
    let mut out = LimitSolution::new("nonmarkov-seir", mesh, [sol.s, e, i, r, sol.force, a]);
    out.iterations = sol.iterations;
    Ok(out)
}
