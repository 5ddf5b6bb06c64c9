//! Growth rate, R0 and the round trip through the generation-interval
//! density for several infectivity laws.

use epilimit::analytics::{growth_rate, r0_from_rho};
use epilimit::laws::{DurationLaw, InfectivityLaw};

fn main() -> epilimit::Result<()> {
    let laws = [
        ("exponential", InfectivityLaw::constant(1.5, DurationLaw::exponential(1.0))),
        ("gamma", InfectivityLaw::constant(1.2, DurationLaw::gamma(3.0, 0.6))),
        ("deterministic", InfectivityLaw::constant(0.8, DurationLaw::deterministic(2.0))),
        (
            "latent",
            InfectivityLaw::Latent {
                rate: 0.5,
                latency: DurationLaw::uniform(1.0, 3.0),
                period: DurationLaw::shifted_beta(3.0, 4.0),
            },
        ),
        ("covid", InfectivityLaw::covid(0.5, 0.3)),
    ];
    println!("{:>14} {:>8} {:>9} {:>10}", "law", "R0", "rho", "R0(rho)");
    for (name, law) in laws {
        let r0 = law.r0();
        let rho = growth_rate(&law)?;
        let horizon = law.truncation_horizon(1e-13);
        let back = r0_from_rho(|t| law.mean(t) / r0, horizon, rho)?;
        println!("{name:>14} {r0:>8.4} {rho:>9.5} {back:>10.4}");
    }
    Ok(())
}
