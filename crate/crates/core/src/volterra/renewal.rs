//! The scalar renewal system shared by the SIR, SEIR and
//! varying-infectivity limits:
//!
//! `S(t) = S(0) - int_0^t U`, `F(t) = src(t) + int_0^t K(t-s) U(s) ds`,
//! `U = c S F`.

use super::kernels::partial_conv;
use super::SolveOptions;
use crate::error::{Error, Result};

/// Damped fixed-point iteration `x <- x + d (map(x) - x)` until the
/// residual is below `tol (1 + |x|)` componentwise. Returns the number of
/// iterations used.
pub(crate) fn fixed_point(
    x: &mut [f64],
    mut map: impl FnMut(&[f64], &mut [f64]),
    opts: &SolveOptions,
    time: f64,
) -> Result<usize> {
    let mut next = vec![0.0; x.len()];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        map(x, &mut next);
        residual = 0.0;
        let mut ok = true;
        for (xi, ni) in x.iter_mut().zip(&next) {
            let r = ni - *xi;
            if r.abs() > opts.tolerance * (1.0 + xi.abs()) {
                ok = false;
            }
            residual = residual.max(r.abs());
            *xi += opts.damping * r;
        }
        if !residual.is_finite() {
            break;
        }
        if ok {
            return Ok(it);
        }
    }
    Err(Error::NoConvergence {
        time,
        iterations: opts.max_iterations,
        residual,
    })
}

pub(crate) struct Renewal<'a> {
    pub kernel: &'a [f64],
    pub source: &'a [f64],
    pub s0: f64,
    pub contact: &'a [f64],
}

pub(crate) struct RenewalSolution {
    pub s: Vec<f64>,
    pub force: Vec<f64>,
    pub ups: Vec<f64>,
    pub iterations: usize,
}

const NEGATIVE_TOLERANCE: f64 = 1e-8;

impl Renewal<'_> {
    pub fn solve(&self, h: f64, opts: &SolveOptions) -> Result<RenewalSolution> {
        let n = self.source.len();
        let mut s = Vec::with_capacity(n);
        let mut force = Vec::with_capacity(n);
        let mut ups = Vec::with_capacity(n);
        s.push(self.s0);
        force.push(self.source[0]);
        ups.push(self.contact[0] * self.s0 * self.source[0]);
        let half = 0.5 * h * self.kernel[0];
        let mut iterations = 0;
        for k in 1..n {
            let base = self.source[k] + partial_conv(self.kernel, &ups, k, h);
            let c = self.contact[k];
            let (s_prev, u_prev) = (s[k - 1], ups[k - 1]);
            let mut x = [s_prev, force[k - 1]];
            let it = if opts.linearized {
                let sl = self.s0;
                fixed_point(&mut x, |x, y| {
                    y[0] = sl;
                    y[1] = base + half * c * sl * x[1];
                }, opts, k as f64 * h)?
            } else {
                fixed_point(&mut x, |x, y| {
                    let u = c * x[0] * x[1];
                    y[0] = s_prev - 0.5 * h * (u_prev + u);
                    y[1] = base + half * u;
                }, opts, k as f64 * h)?
            };
            iterations = iterations.max(it);
            if x[0] < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeState {
                    component: "S",
                    time: k as f64 * h,
                    value: x[0],
                });
            }
            let u = c * x[0] * x[1];
            // Close the S update on the final iterate so that S + I + R = 1
            // holds to rounding.
            s.push(if opts.linearized { x[0] } else { s_prev - 0.5 * h * (u_prev + u) });
            force.push(x[1]);
            ups.push(u);
        }
        Ok(RenewalSolution {
            s,
            force,
            ups,
            iterations,
        })
    }
}
