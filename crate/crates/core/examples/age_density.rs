//! Infection-age density by characteristics; its mass tracks the Volterra
//! prevalence.

use epilimit::abm::{Dynamics, InitialCondition, ModelSpec};
use epilimit::age_pde::{initial_density, solve_age_density};
use epilimit::laws::{DurationLaw, InfectivityLaw};
use epilimit::mesh::sup_distance;
use epilimit::volterra::{solve, SolveOptions};
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let h = 0.01;
    let mesh = TimeMesh::new(8.0, h)?;
    let period = DurationLaw::gamma(2.0, 0.5);
    let age = DurationLaw::exponential(2.0);
    let law = InfectivityLaw::constant(2.5, period.clone());
    let opts = SolveOptions::default();

    let field = solve_age_density(&law, &initial_density(0.03, &age, h)?, 0.97, &mesh, &opts)?;
    let model = ModelSpec::new(
        1,
        Dynamics::NonmarkovSir {
            infection_rate: 2.5,
            infectious_period: period,
            initial_period: None,
        },
        InitialCondition {
            age: Some(age),
            ..InitialCondition::sir(0.03)
        },
    );
    let limit = solve(&model, &mesh, &opts)?;
    println!("sup |int i(t, x) dx - I(t)| = {:.2e}", sup_distance(&field.totals(), limit.i()));
    for t in [0.0, 2.0, 4.0, 6.0, 8.0] {
        let n = mesh.index_of(t);
        println!("t = {t}: incidence {:.4}, mass {:.4}", field.boundary[n], field.total(n));
    }
    Ok(())
}
