//! Exact event-driven simulation of individual-based epidemic models.
//!
//! Infections are the accepted points of a Poisson random measure thinned
//! against the current infection rate; all other transitions are scheduled
//! per individual or drawn from memoryless aggregate clocks.

mod engine;
mod ensemble;
mod multipatch;
mod paths;
mod queue;
mod spec;
mod susceptibility;
mod trajectory;

pub use ensemble::{replicate, replicate_map, seed_range, Ensemble, RunningStats};
pub use spec::{Dynamics, InitialCondition, Migration, ModelSpec, MultipatchSpec, Patch};
pub use trajectory::{
    Compartment, EventCounts, EventKind, EventRecord, PatchSeries, Trajectory,
};


use crate::error::Result;
use crate::mesh::TimeMesh;

/// Simulation switches.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Keep a log of every state change.
    pub record_events: bool,
    /// Dominating rate of the infection measure; must be at least the
    /// family's default bound. Sharing it across runs with different rates
    /// couples them through the same random measure.
    pub dominating_rate: Option<f64>,
    /// Stop at the first time with no exposed or infected individual.
    pub stop_when_extinct: bool,
    /// Stop (and flag the run as censored) after this many events.
    pub max_events: Option<u64>,
}

/// One realization of `model` recorded on `mesh`.
pub fn simulate(
    model: &ModelSpec,
    mesh: &TimeMesh,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    model.validate()?;
    match &model.dynamics {
        Dynamics::Multipatch(_) => multipatch::run(model, mesh, seed, opts),
        Dynamics::VaryingSusceptibility { .. } => susceptibility::run(model, mesh, seed, opts),
        _ => engine::run(model, mesh, seed, opts),
    }
}

/// Time to extinction of a run, or `None` when it survives up to `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extinction {
    pub time: Option<f64>,
    pub censored: bool,
}

/// Runs `model` until no one is infected, or until `cap`.
pub fn extinction_time(model: &ModelSpec, seed: u64, cap: f64) -> Result<Extinction> {
    let mesh = TimeMesh::new(cap, cap)?;
    let opts = SimOptions {
        stop_when_extinct: true,
        ..SimOptions::default()
    };
    let t = simulate(model, &mesh, seed, &opts)?;
    Ok(Extinction {
        time: t.extinction_time,
        censored: t.extinction_time.is_none(),
    })
}
