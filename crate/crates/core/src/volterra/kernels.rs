//! Kernel tabulation and trapezoid convolutions on a uniform mesh.
//!
//! Kernels appear under integrals, so at a jump the node carries the average
//! of the one-sided limits; this is the exact cellwise trapezoid rule when
//! the jump sits on a node. Node 0 carries the right limit.

use crate::laws::DurationLaw;

/// Node values of `f`, averaging `f(t-)` and `f(t)` when `jumps` is set.
pub(crate) fn mid_nodes(nodes: usize, step: f64, jumps: bool, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let delta = 1e-9 * step;
    (0..nodes)
        .map(|k| {
            let t = k as f64 * step;
            if k == 0 || !jumps {
                f(t)
            } else {
                0.5 * (f(t - delta) + f(t))
            }
        })
        .collect()
}

/// Survival function of `law` as a convolution kernel.
pub(crate) fn survival_nodes(law: &DurationLaw, nodes: usize, step: f64) -> Vec<f64> {
    (0..nodes)
        .map(|k| {
            let t = k as f64 * step;
            if k == 0 {
                law.survival(0.0)
            } else {
                law.survival_mid(t)
            }
        })
        .collect()
}

/// Quadrature rule of an age law; laws without one (sums) are represented
/// by a fixed Monte Carlo sample.
pub(crate) fn age_rule(age: &DurationLaw) -> Vec<(f64, f64)> {
    age.rule().unwrap_or_else(|| {
        const SAMPLES: usize = 4096;
        let mut rng = crate::rng::stream(0, crate::rng::Domain::Panel, u64::MAX);
        (0..SAMPLES)
            .map(|_| (age.sample(&mut rng), 1.0 / SAMPLES as f64))
            .collect()
    })
}

/// `E[g(Y, t)]` over an age law `Y`, for every `t` in `times`.
pub(crate) fn age_average(
    age: &DurationLaw,
    times: &[f64],
    g: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let rule = age_rule(age);
    times
        .iter()
        .map(|t| rule.iter().map(|(y, w)| w * g(*y, *t)).sum())
        .collect()
}

/// Survival of the remaining period of the initially infected at each
/// time: `F^c(t + Y) / F^c(Y)` averaged over the age `Y` when an age law is
/// given, the survival of `initial` otherwise.
pub(crate) fn initial_survival(
    period: &DurationLaw,
    initial: &DurationLaw,
    age: Option<&DurationLaw>,
    times: &[f64],
) -> Vec<f64> {
    match age {
        Some(a) => age_average(a, times, |y, t| {
            let alive = period.survival(y);
            if alive > 0.0 {
                period.survival(y + t) / alive
            } else {
                0.0
            }
        }),
        None => times.iter().map(|t| initial.survival(*t)).collect(),
    }
}

/// `h [K_n U_0 / 2 + sum_{k=1}^{n-1} K_{n-k} U_k]`, the trapezoid
/// convolution without its (implicit) last term.
#[inline]
pub(crate) fn partial_conv(kernel: &[f64], ups: &[f64], n: usize, h: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.5 * kernel[n] * ups[0];
    for k in 1..n {
        acc += kernel[n - k] * ups[k];
    }
    h * acc
}

/// Full trapezoid convolution `int_0^{t_n} K(t_n - s) U(s) ds`.
#[inline]
pub(crate) fn conv(kernel: &[f64], ups: &[f64], n: usize, h: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    partial_conv(kernel, ups, n, h) + 0.5 * h * kernel[0] * ups[n]
}

pub(crate) fn conv_all(kernel: &[f64], ups: &[f64], h: f64) -> Vec<f64> {
    (0..ups.len()).map(|n| conv(kernel, ups, n, h)).collect()
}

/// Cumulative trapezoid integral.
pub(crate) fn cumulative(ups: &[f64], h: f64) -> Vec<f64> {
    crate::quadrature::cumulative_trapezoid(ups, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_of_exponentials() {
        // int_0^t e^{-(t-s)} e^{-2s} ds = e^{-t} - e^{-2t}
        let h = 1e-3;
        let n = 2001;
        let k: Vec<f64> = (0..n).map(|j| (-(j as f64) * h).exp()).collect();
        let u: Vec<f64> = (0..n).map(|j| (-2.0 * j as f64 * h).exp()).collect();
        let c = conv(&k, &u, n - 1, h);
        let t = (n - 1) as f64 * h;
        assert!((c - ((-t).exp() - (-2.0 * t).exp())).abs() < 1e-6);
    }

    #[test]
    fn jump_nodes_average_the_limits() {
        let law = DurationLaw::deterministic(0.5);
        let k = survival_nodes(&law, 11, 0.1);
        assert_eq!(k[0], 1.0);
        assert_eq!(k[4], 1.0);
        assert_eq!(k[5], 0.5);
        assert_eq!(k[6], 0.0);
    }

    #[test]
    fn aged_initial_survival_of_exponential_is_memoryless() {
        let f = DurationLaw::exponential(1.3);
        let age = DurationLaw::uniform(0.0, 2.0);
        let times = [0.0, 0.5, 1.0];
        let v = initial_survival(&f, &f, Some(&age), &times);
        for (t, x) in times.iter().zip(v) {
            assert!((x - (-1.3 * t).exp()).abs() < 1e-10);
        }
    }
}
