//! Laws of the random durations and random functions attached to individuals.

mod duration;
mod infectivity;
mod joint;
mod path;
mod susceptibility;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub use duration::{beta22_quantile, Component, DurationLaw};
pub use infectivity::{CovidProfile, InfectivityLaw};
pub use joint::JointLaw;
pub use path::{Path, Shape};
pub use susceptibility::SusceptibilityLaw;

use crate::mesh::Curve;
use crate::rng::{stream, Domain};

type CacheKey = (String, u64, usize, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Curve>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Curve>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Monte Carlo estimate of `E[lambda(t)]` at `k * step`, `k < nodes`,
/// cached per (law, grid, samples, seed).
pub fn mean_curve(
    law: &InfectivityLaw,
    step: f64,
    nodes: usize,
    samples: usize,
    seed: u64,
) -> Arc<Curve> {
    let key = (
        serde_json::to_string(law).expect("laws serialize"),
        step.to_bits(),
        nodes,
        samples,
        seed,
    );
    if let Some(c) = cache().lock().unwrap().get(&key) {
        return c.clone();
    }
    let mut rng = stream(seed, Domain::Panel, 0);
    let mut acc = vec![0.0; nodes];
    for _ in 0..samples {
        let p = law.sample(&mut rng);
        let end = p.support_end();
        let start = p.knots.first().map_or(0.0, |k| k.0).max(0.0);
        let k0 = (start / step).floor() as usize;
        for (k, a) in acc.iter_mut().enumerate().skip(k0) {
            let t = k as f64 * step;
            if t >= end {
                break;
            }
            *a += p.value(t);
        }
    }
    let curve = Arc::new(Curve::new(
        step,
        acc.into_iter().map(|v| v / samples as f64).collect(),
    ));
    cache().lock().unwrap().insert(key, curve.clone());
    curve
}

/// `int lambda_bar`, by the trapezoid rule on the curve.
pub fn basic_reproduction_number(mean: &Curve) -> f64 {
    mean.integral()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monte_carlo_mean_curve_matches_exact_mean() {
        let law = InfectivityLaw::covid(0.5, 0.8);
        let samples = 20_000;
        let mc = mean_curve(&law, 0.25, 65, samples, 5);
        for (k, v) in mc.values.iter().enumerate() {
            let exact = law.mean(k as f64 * 0.25);
            // each lambda(t) lies in [0, 1]
            assert!((v - exact).abs() < 4.0 * (0.25 / samples as f64).sqrt() + 1e-12);
        }
        let again = mean_curve(&law, 0.25, 65, samples, 5);
        assert!(Arc::ptr_eq(&mc, &again));
        assert!((basic_reproduction_number(&law.mean_curve_exact(0.01, 1601)) - 1.9).abs() < 1e-4);
    }
}
