//! Triangular infectivity profiles: growth rate, doubling time and the
//! deterministic epidemic curve.

use epilimit::abm::{Dynamics, InitialCondition, ModelSpec};
use epilimit::analytics::growth_rate;
use epilimit::laws::InfectivityLaw;
use epilimit::volterra::{solve, SolveOptions};
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let law = InfectivityLaw::covid(0.5, 0.3);
    let rho = growth_rate(&law)?;
    println!("R0 = {:.3}, rho = {rho:.4}, doubling time = {:.2} days", law.r0(), std::f64::consts::LN_2 / rho);

    let mesh = TimeMesh::new(120.0, 0.1)?;
    let model = ModelSpec::new(
        100_000,
        Dynamics::VaryingInfectivity {
            infectivity: law,
            initial_infectivity: None,
        },
        InitialCondition::sir(1e-4),
    );
    let sol = solve(&model, &mesh, &SolveOptions::default())?;
    for t in [0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0] {
        let k = mesh.index_of(t);
        println!("t = {t:>5}: S = {:.4}  I = {:.4}  force = {:.4}", sol.s()[k], sol.i()[k], sol.force()[k]);
    }
    Ok(())
}
