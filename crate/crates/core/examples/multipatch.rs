//! Two patches with migration: Volterra limit against the simulator.

use epilimit::abm::{
    replicate, seed_range, Dynamics, InitialCondition, Migration, ModelSpec, MultipatchSpec, Patch,
    SimOptions,
};
use epilimit::laws::DurationLaw;
use epilimit::mesh::sup_distance;
use epilimit::volterra::{solve, SolveOptions};
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let spec = MultipatchSpec {
        patches: vec![
            Patch {
                infection_rate: 2.0,
                susceptible: 0.4,
                infected: 0.05,
                recovered: 0.0,
            },
            Patch {
                infection_rate: 1.5,
                susceptible: 0.55,
                infected: 0.0,
                recovered: 0.0,
            },
        ],
        contact: vec![vec![1.0, 0.3], vec![0.5, 1.0]],
        normalization: 0.5,
        infectious_period: DurationLaw::gamma(2.0, 0.5),
        initial_period: None,
        migration: Migration {
            susceptible: vec![vec![0.0, 0.1], vec![0.05, 0.0]],
            infected: vec![vec![0.0, 0.2], vec![0.1, 0.0]],
            recovered: vec![],
        },
    };
    let model = ModelSpec::new(4_000, Dynamics::Multipatch(spec), InitialCondition::sir(0.05));
    let mesh = TimeMesh::new(15.0, 0.05)?;
    let limit = solve(&model, &mesh, &SolveOptions::default())?;
    let ens = replicate(&model, &mesh, &seed_range(0, 10), &SimOptions::default())?;
    for p in 0..2 {
        let name = format!("I_p{p}");
        let err = sup_distance(ens.mean(&name).unwrap(), limit.curve(&name).unwrap());
        println!("patch {p}: sup |mean I^N - I| = {err:.4}");
    }
    Ok(())
}
