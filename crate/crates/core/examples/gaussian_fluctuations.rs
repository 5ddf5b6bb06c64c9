//! Driver covariances of the Markov SIR fluctuation limit and the variance
//! of sampled paths, against replicated simulations at N = 10^4.

use epilimit::abm::{replicate_map, seed_range, Dynamics, InitialCondition, ModelSpec, SimOptions};
use epilimit::fclt::{driver_covariances, sample_fluctuations, FcltOptions};
use epilimit::volterra::{solve, SolveOptions};
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let n = 10_000;
    let model = ModelSpec::new(
        n,
        Dynamics::MarkovSir {
            infection_rate: 1.5,
            recovery_rate: 1.0,
        },
        InitialCondition::sir(0.05),
    );
    let mesh = TimeMesh::new(5.0, 0.05)?;
    let limit = solve(&model, &mesh, &SolveOptions::default())?;
    let spec = driver_covariances(&model, &limit, &FcltOptions::default())?;
    println!("drivers {:?}, min eigenvalue {:.2e}", spec.names(), spec.min_eigenvalue());
    let paths = sample_fluctuations(&spec, 4_000, 1)?;
    let var_limit = *paths.stats("I").unwrap().variance().last().unwrap();

    let last = mesh.nodes() - 1;
    let i5 = limit.i()[last];
    let samples = replicate_map(&model, &mesh, &seed_range(0, 300), &SimOptions::default(), |t| {
        (n as f64).sqrt() * (t.fraction(epilimit::abm::Compartment::I)[last] - i5)
    })?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    println!("Var sqrt(N)(I^N(5) - I(5)): simulated {var:.4}, Gaussian limit {var_limit:.4}");
    Ok(())
}
