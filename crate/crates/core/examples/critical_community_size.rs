//! Endemic equilibria of the Markov models and the population size below
//! which measles-like dynamics fade out between waves.

use epilimit::abm::Dynamics;
use epilimit::analytics::{critical_population_size, markov_equilibria};

fn main() -> epilimit::Result<()> {
    let demography = Dynamics::MarkovSirDemography {
        infection_rate: 15.0 * (52.0 + 1.0 / 75.0),
        recovery_rate: 52.0,
        birth_death_rate: 1.0 / 75.0,
    };
    let eq = markov_equilibria(&demography)?;
    println!("measles-like: R0 = {:.2}, S* = {:.4}, I* = {:.2e}", eq.r0, eq.susceptible, eq.infected);
    let nc = critical_population_size(15.0, 52.0, 1.0 / 75.0)?;
    println!("critical population size: {nc:.3e}");

    let sirs = Dynamics::MarkovSirs {
        infection_rate: 3.0,
        recovery_rate: 1.0,
        immunity_loss_rate: 0.1,
    };
    let eq = markov_equilibria(&sirs)?;
    println!("SIRS: S* = {:.4}, I* = {:.4}, R* = {:.4}", eq.susceptible, eq.infected, eq.recovered);
    Ok(())
}
