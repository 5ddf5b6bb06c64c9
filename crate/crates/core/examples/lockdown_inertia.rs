//! Same growth before and same decay rate after a contact drop on day 28:
//! bounded latency and infectious periods keep cumulative infections rising
//! for longer than exponential ones.

use epilimit::cli::{compare, default_compare_config};
use epilimit::volterra::SolveOptions;
use epilimit::TimeMesh;

fn main() -> epilimit::Result<()> {
    let cfg = default_compare_config();
    let mesh = TimeMesh::new(60.0, 0.1)?;
    let report = compare(&cfg, &mesh, &SolveOptions::default())?;
    for (name, side) in [("markov", &report.markov), ("non-markov", &report.nonmarkov)] {
        println!("{name:>11}: R0 {:.3}, contact factor after day 28 {:.3}", side.r0, side.contact_factor);
    }
    println!("{:>5} {:>10} {:>10} {:>10}", "day", "markov", "non-markov", "gap");
    for day in [28.0, 35.0, 42.0, 49.0, 60.0] {
        let k = mesh.index_of(day);
        println!(
            "{day:>5} {:>10.5} {:>10.5} {:>10.5}",
            report.markov.solution.cumulative()[k],
            report.nonmarkov.solution.cumulative()[k],
            report.gap[k]
        );
    }
    Ok(())
}
