//! Uniform time meshes and curves sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform mesh `0, h, 2h, ..., T` with `T/h` an integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    step: f64,
    intervals: usize,
}

impl TimeMesh {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("mesh step must be positive, got {step}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        let ratio = horizon / step;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) || n < 1.0 {
            return Err(invalid(format!(
                "horizon {horizon} is not an integer multiple of step {step}"
            )));
        }
        Ok(TimeMesh {
            step,
            intervals: n as usize,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of intervals; the mesh has `intervals() + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn horizon(&self) -> f64 {
        self.intervals as f64 * self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|k| self.time(k)).collect()
    }

    /// Index of the node closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.step).round().max(0.0) as usize).min(self.intervals)
    }

    /// Same horizon with the step divided by `factor`.
    pub fn refine(&self, factor: usize) -> TimeMesh {
        TimeMesh {
            step: self.step / factor as f64,
            intervals: self.intervals * factor,
        }
    }
}

/// Function sampled at `k * step`, linearly interpolated in between and held
/// constant past the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub step: f64,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn new(step: f64, values: Vec<f64>) -> Self {
        Curve { step, values }
    }

    pub fn from_fn(step: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Self {
        Curve {
            step,
            values: (0..nodes).map(|k| f(k as f64 * step)).collect(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        if t <= 0.0 {
            return self.values[0];
        }
        let x = t / self.step;
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let w = x - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Values at the nodes of `mesh`.
    pub fn on_mesh(&self, mesh: &TimeMesh) -> Vec<f64> {
        (0..mesh.nodes()).map(|k| self.eval(mesh.time(k))).collect()
    }

    pub fn end(&self) -> f64 {
        self.step * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trapezoid integral over the whole curve.
    pub fn integral(&self) -> f64 {
        crate::quadrature::trapezoid(&self.values, self.step)
    }
}

/// Largest absolute difference between two equally long slices.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
