//! Piecewise-linear and piecewise-constant random function realizations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Linear interpolation between knots.
    Linear,
    /// Value of knot `k` on `[t_k, t_{k+1})`.
    Constant,
}

/// A function of age given by knots `(t_k, v_k)` with increasing `t_k`.
/// It is zero before the first knot and equal to the last value after the
/// last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub shape: Shape,
    pub knots: Vec<(f64, f64)>,
}

impl Path {
    pub fn zero() -> Self {
        Path {
            shape: Shape::Constant,
            knots: Vec::new(),
        }
    }

    pub fn constant(knots: Vec<(f64, f64)>) -> Self {
        Path {
            shape: Shape::Constant,
            knots,
        }
    }

    pub fn linear(knots: Vec<(f64, f64)>) -> Self {
        Path {
            shape: Shape::Linear,
            knots,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        if k.is_empty() || t < k[0].0 {
            return 0.0;
        }
        // index of the last knot with time <= t
        let i = k.partition_point(|(tk, _)| *tk <= t) - 1;
        match self.shape {
            Shape::Constant => k[i].1,
            Shape::Linear => {
                if i + 1 == k.len() {
                    k[i].1
                } else {
                    let (t0, v0) = k[i];
                    let (t1, v1) = k[i + 1];
                    if t1 > t0 {
                        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                    } else {
                        v1
                    }
                }
            }
        }
    }

    pub fn max(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }

    /// `sup { t : value(t) > 0 }`, infinite when the path never returns to 0.
    pub fn support_end(&self) -> f64 {
        let k = &self.knots;
        match k.last() {
            None => 0.0,
            Some(&(_, v)) if v > 0.0 => f64::INFINITY,
            Some(_) => match k.iter().rposition(|(_, v)| *v > 0.0) {
                None => 0.0,
                Some(i) => k[i + 1].0,
            },
        }
    }

    pub fn shifted(&self, dt: f64) -> Path {
        Path {
            shape: self.shape,
            knots: self.knots.iter().map(|(t, v)| (t + dt, *v)).collect(),
        }
    }

    /// `int_0^inf value(t) exp(-rho t) dt` for a path ending at zero.
    pub fn laplace(&self, rho: f64) -> f64 {
        let k = &self.knots;
        let mut acc = 0.0;
        for w in k.windows(2) {
            let (a, va) = w[0];
            let (b, vb) = w[1];
            let d = b - a;
            if d <= 0.0 {
                continue;
            }
            let slope = match self.shape {
                Shape::Linear => (vb - va) / d,
                Shape::Constant => 0.0,
            };
            let x = rho * d;
            let (e0, e1) = if x.abs() < 1e-4 {
                (
                    d * (1.0 - x / 2.0 + x * x / 6.0),
                    d * d * (0.5 - x / 3.0 + x * x / 8.0),
                )
            } else {
                let e = (-x).exp();
                ((1.0 - e) / rho, (1.0 - e * (1.0 + x)) / (rho * rho))
            };
            acc += (-rho * a).exp() * (va * e0 + slope * e1);
        }
        acc
    }
}
