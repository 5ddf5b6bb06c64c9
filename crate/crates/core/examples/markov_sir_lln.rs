//! Mean of replicated Markov SIR runs against the ODE limit.

use epilimit::abm::{replicate, seed_range, Dynamics, InitialCondition, ModelSpec, SimOptions};
use epilimit::mesh::sup_distance;
use epilimit::volterra::{solve, SolveOptions};
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let mesh = TimeMesh::new(15.0, 0.05)?;
    let dynamics = Dynamics::MarkovSir {
        infection_rate: 1.5,
        recovery_rate: 1.0,
    };
    let ode = solve(
        &ModelSpec::new(1, dynamics.clone(), InitialCondition::sir(0.05)),
        &mesh,
        &SolveOptions::default(),
    )?;
    println!("{:>8} {:>12}", "N", "sup |I - I*|");
    for n in [100, 1_000, 10_000] {
        let model = ModelSpec::new(n, dynamics.clone(), InitialCondition::sir(0.05));
        let ens = replicate(&model, &mesh, &seed_range(1, 20), &SimOptions::default())?;
        let err = sup_distance(ens.mean("I").unwrap(), ode.i());
        println!("{n:>8} {err:>12.5}");
    }
    Ok(())
}
