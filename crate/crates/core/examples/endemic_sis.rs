//! SIS: endemic level, equilibrium age density, quasi-potential, and the
//! growth of simulated extinction times with N.

use epilimit::abm::{extinction_time, Dynamics, InitialCondition, ModelSpec};
use epilimit::age_pde::{initial_density, sis_endemic_equilibrium, solve_sis_age_density};
use epilimit::analytics::sis_quasipotential;
use epilimit::laws::{DurationLaw, InfectivityLaw};
use epilimit::volterra::SolveOptions;
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let h = 0.02;
    let law = InfectivityLaw::constant(2.0, DurationLaw::gamma(2.0, 0.5));
    let mesh = TimeMesh::new(40.0, h)?;
    let init = initial_density(0.05, &DurationLaw::exponential(1.0), h)?;
    let field = solve_sis_age_density(&law, &init, &mesh, &SolveOptions::default())?;
    let eq = sis_endemic_equilibrium(&law, h, 10.0)?;
    println!("prevalence at t = 40: {:.4} (equilibrium {:.4})", field.total(mesh.nodes() - 1), eq.prevalence);

    let v = sis_quasipotential(1.5)?;
    println!("quasi-potential at R0 = 1.5: {v:.4}");
    for n in [20, 40, 60] {
        let model = ModelSpec::new(
            n,
            Dynamics::MarkovSis {
                infection_rate: 1.5,
                recovery_rate: 1.0,
            },
            InitialCondition::sir(1.0 / 3.0),
        );
        let mut times = Vec::new();
        for seed in 0..40 {
            times.extend(extinction_time(&model, seed, 1e5)?.time);
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        println!("N = {n}: mean extinction time {mean:.1}, exp(N V) = {:.1}", (n as f64 * v).exp());
    }
    Ok(())
}
