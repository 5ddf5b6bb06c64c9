//! Deterministic large-population limits: ODEs, Volterra integral systems
//! and the varying-susceptibility fixed point.
//!
//! All integral solvers share one scheme: trapezoid quadrature of the
//! convolution terms on a uniform mesh, with the implicit value at each new
//! node resolved by damped fixed-point iteration.

pub(crate) mod kernels;
mod multipatch;
mod ode;
pub(crate) mod renewal;
mod sir;
mod vivs;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::abm::{Dynamics, ModelSpec};
use crate::error::{invalid, Result};
use crate::mesh::TimeMesh;

pub use multipatch::solve_multipatch_volterra;
pub use ode::{solve_ode, OdeSystem};
pub use sir::{solve_seir_volterra, solve_sir_volterra, solve_vi_curves, solve_vi_volterra, ViCurves};
pub use vivs::solve_vivs_fixed_point;

/// Piecewise-constant multiplier of all contact rates: `factor` applies
/// from `time` on, until the next change.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSchedule {
    pub changes: Vec<ContactChange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactChange {
    pub time: f64,
    pub factor: f64,
}

impl ContactSchedule {
    pub fn step(time: f64, factor: f64) -> Self {
        ContactSchedule {
            changes: vec![ContactChange { time, factor }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.changes.windows(2) {
            if w[1].time < w[0].time {
                return Err(invalid("contact changes must be sorted by time"));
            }
        }
        if self
            .changes
            .iter()
            .any(|c| !(c.factor >= 0.0 && c.factor.is_finite() && c.time.is_finite()))
        {
            return Err(invalid("contact factors must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn factor(&self, t: f64) -> f64 {
        self.changes
            .iter()
            .take_while(|c| c.time <= t)
            .last()
            .map_or(1.0, |c| c.factor)
    }

    pub(crate) fn on_mesh(schedule: Option<&ContactSchedule>, mesh: &TimeMesh) -> Vec<f64> {
        mesh.times()
            .iter()
            .map(|t| schedule.map_or(1.0, |s| s.factor(*t)))
            .collect()
    }
}

/// How the expectations over susceptibility trajectories are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelMode {
    /// Quadrature when the waning is deterministic and the period laws
    /// admit a rule, Monte Carlo otherwise.
    Auto,
    MonteCarlo,
}

/// Numerical switches shared by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Absolute tolerance of the per-node fixed point.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub contact: Option<ContactSchedule>,
    /// Freeze the susceptible fraction at its initial value.
    pub linearized: bool,
    /// Size of each Monte Carlo panel of susceptibility trajectories.
    pub panel_samples: usize,
    pub panel_seed: u64,
    pub panel_mode: PanelMode,
    /// Sup-norm stopping tolerance of the Picard iteration.
    pub picard_tolerance: f64,
    pub picard_max_iterations: usize,
    /// Constant first Picard iterate of the force of infection; `None`
    /// starts from zero.
    pub picard_start: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-12,
            max_iterations: 100,
            damping: 0.5,
            contact: None,
            linearized: false,
            panel_samples: 2000,
            panel_seed: 0,
            panel_mode: PanelMode::Auto,
            picard_tolerance: 1e-8,
            picard_max_iterations: 200,
            picard_start: None,
        }
    }
}

/// Curves of a deterministic limit on a mesh. Columns follow the simulator
/// layout: `S, E, I, R, F, A`, then optional extras (`Z`, its Monte Carlo
/// standard error `Z_se`, per-patch `S_p{i}`, `I_p{i}`, `R_p{i}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSolution {
    pub family: String,
    pub step: f64,
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    /// Largest number of fixed-point (or Picard) iterations used.
    pub iterations: usize,
}

impl LimitSolution {
    pub(crate) fn new(family: &str, mesh: &TimeMesh, core: [Vec<f64>; 6]) -> Self {
        let names = ["S", "E", "I", "R", "F", "A"];
        LimitSolution {
            family: family.to_string(),
            step: mesh.step(),
            times: mesh.times(),
            columns: names
                .iter()
                .zip(core)
                .map(|(n, v)| (n.to_string(), v))
                .collect(),
            iterations: 0,
        }
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.columns.push((name.into(), values));
    }

    pub fn curve(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    fn core(&self, name: &str) -> &[f64] {
        self.curve(name).expect("core column")
    }

    pub fn s(&self) -> &[f64] {
        self.core("S")
    }

    pub fn e(&self) -> &[f64] {
        self.core("E")
    }

    pub fn i(&self) -> &[f64] {
        self.core("I")
    }

    pub fn r(&self) -> &[f64] {
        self.core("R")
    }

    pub fn force(&self) -> &[f64] {
        self.core("F")
    }

    pub fn cumulative(&self) -> &[f64] {
        self.core("A")
    }

    pub fn write_csv<W: Write>(&self, mut out: W, digest: &str) -> Result<()> {
        crate::output::write_table(&mut out, digest, &self.times, &self.columns)
    }
}

/// Deterministic limit of any model family.
pub fn solve(model: &ModelSpec, mesh: &TimeMesh, opts: &SolveOptions) -> Result<LimitSolution> {
    model.validate()?;
    match &model.dynamics {
        Dynamics::NonmarkovSir { .. } => solve_sir_volterra(model, mesh, opts),
        Dynamics::NonmarkovSeir { .. } => solve_seir_volterra(model, mesh, opts),
        Dynamics::VaryingInfectivity { .. } => solve_vi_volterra(model, mesh, opts),
        Dynamics::VaryingSusceptibility { .. } => solve_vivs_fixed_point(model, mesh, opts),
        Dynamics::Multipatch(_) => solve_multipatch_volterra(model, mesh, opts),
        d => {
            let system = OdeSystem::from_dynamics(d)?;
            solve_ode(&system, &model.initial, mesh, opts.contact.as_ref())
        }
    }
}
