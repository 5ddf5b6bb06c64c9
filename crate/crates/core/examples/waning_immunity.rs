//! Susceptibility that returns in full a random delay after recovery: the
//! fixed-point limit settles near the endemic state.

use epilimit::abm::{Dynamics, InitialCondition, ModelSpec};
use epilimit::laws::{DurationLaw, InfectivityLaw, SusceptibilityLaw};
use epilimit::volterra::{solve_vivs_fixed_point, SolveOptions};
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let (lambda, gamma, mean_delay) = (0.4, 0.2, 30.0);
    let model = ModelSpec::new(
        1,
        Dynamics::VaryingSusceptibility {
            infectivity: InfectivityLaw::constant(lambda, DurationLaw::exponential(gamma)),
            susceptibility: SusceptibilityLaw::Step {
                delay: DurationLaw::deterministic(mean_delay),
            },
            initial_infectivity: None,
            since_recovery: None,
        },
        InitialCondition::sir(0.01),
    );
    let mesh = TimeMesh::new(300.0, 0.5)?;
    let sol = solve_vivs_fixed_point(&model, &mesh, &SolveOptions::default())?;
    let z_star = gamma / lambda;
    let f_star = lambda * (1.0 - z_star) / (1.0 + gamma * mean_delay);
    for t in [0.0, 50.0, 100.0, 200.0, 300.0] {
        let k = mesh.index_of(t);
        let (z, f) = (sol.curve("Z").unwrap()[k], sol.force()[k]);
        println!("t = {t:>5}: mean susceptibility {z:.4}, force {f:.4}");
    }
    println!("endemic point: susceptibility {z_star:.4}, force {f_star:.4}");
    println!("Picard iterations: {}", sol.iterations);
    Ok(())
}
