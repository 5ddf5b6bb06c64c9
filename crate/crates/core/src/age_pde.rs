//! Infection-age density `i(t, x)` of the infected population.
//!
//! The boundary trace `b(t) = i(t, 0)` (the incidence) solves a scalar
//! Volterra equation; the interior follows by transport along the
//! characteristics `x - t = const`:
//! `i(t, x) = F^c(x) / F^c(x - t) i(0, x - t)` for `x >= t` and
//! `i(t, x) = F^c(x) b(t - x)` for `x < t`.
//! Time and age share one step, so characteristics run through nodes.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::laws::{DurationLaw, InfectivityLaw};
use crate::mesh::{Curve, TimeMesh};
use crate::output::write_rows;
use crate::volterra::kernels::{partial_conv, survival_nodes};
use crate::volterra::renewal::fixed_point;
use crate::volterra::SolveOptions;

/// Density field on the grid `t_n = n h`, `x_j = j h`, `j < ages`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeDensityField {
    pub step: f64,
    pub times: Vec<f64>,
    /// Number of age nodes, covering `[0, T + x_bar]`.
    pub ages: usize,
    /// `values[n * ages + j]`
    pub values: Vec<f64>,
    /// `i(t, 0)`.
    pub boundary: Vec<f64>,
    pub susceptible: Vec<f64>,
    /// Hazard of the period law at the age nodes.
    pub hazard: Vec<f64>,
    /// First time the susceptible fraction was clamped at zero.
    pub clamped_at: Option<f64>,
}

impl AgeDensityField {
    pub fn value(&self, n: usize, j: usize) -> f64 {
        self.values[n * self.ages + j]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.ages..(n + 1) * self.ages]
    }

    /// `int i(t_n, x) dx`, the infected fraction.
    pub fn total(&self, n: usize) -> f64 {
        crate::quadrature::trapezoid(self.row(n), self.step)
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.times.len()).map(|n| self.total(n)).collect()
    }

    /// Centered finite-difference residual of `i_t + i_x + gamma i = 0` at
    /// an interior node.
    pub fn residual(&self, n: usize, j: usize) -> f64 {
        let h = self.step;
        let dt = (self.value(n + 1, j) - self.value(n - 1, j)) / (2.0 * h);
        let dx = (self.value(n, j + 1) - self.value(n, j - 1)) / (2.0 * h);
        dt + dx + self.hazard[j] * self.value(n, j)
    }

    /// Long form `t, x, i`, every `stride`-th node in both directions.
    pub fn write_long_csv<W: Write>(&self, mut out: W, digest: &str, stride: usize) -> Result<()> {
        let stride = stride.max(1);
        let rows = (0..self.times.len()).step_by(stride).flat_map(|n| {
            (0..self.ages)
                .step_by(stride)
                .map(move |j| vec![self.times[n], j as f64 * self.step, self.value(n, j)])
        });
        write_rows(&mut out, digest, &["t", "x", "i"], rows)
    }

    /// `t, boundary, S, I`.
    pub fn write_boundary_csv<W: Write>(&self, mut out: W, digest: &str) -> Result<()> {
        let rows = (0..self.times.len()).map(|n| {
            vec![self.times[n], self.boundary[n], self.susceptible[n], self.total(n)]
        });
        write_rows(&mut out, digest, &["t", "boundary", "S", "I"], rows)
    }
}

/// Initial density `prevalence * p(x)` of an age law with a density `p`,
/// tabulated up to its truncation horizon.
pub fn initial_density(prevalence: f64, age: &DurationLaw, step: f64) -> Result<Curve> {
    if age.density(0.0).is_none() {
        return Err(invalid("the age law needs a density"));
    }
    let end = age.truncation_horizon(1e-10);
    let nodes = (end / step).ceil() as usize + 1;
    Ok(Curve::from_fn(step, nodes, |x| {
        prevalence * age.density(x).unwrap_or(0.0)
    }))
}

/// Hazard `f / F^c` at the nodes `j h`: analytic when the law has a
/// density, otherwise a centered difference of `F` over `4h`.
pub fn hazard_curve(law: &DurationLaw, step: f64, nodes: usize) -> Vec<f64> {
    (0..nodes)
        .map(|j| {
            let x = j as f64 * step;
            match law.hazard(x) {
                Some(v) => v,
                None => {
                    let bw = 4.0 * step;
                    let lo = (x - bw / 2.0).max(0.0);
                    let slope = (law.cdf(x + bw / 2.0) - law.cdf(lo)) / (x + bw / 2.0 - lo);
                    let s = law.survival(x);
                    if s > 0.0 {
                        slope / s
                    } else {
                        f64::INFINITY
                    }
                }
            }
        })
        .collect()
}

enum Variant {
    Sir { susceptible: f64 },
    Sis,
}

struct Setup {
    n: usize,
    h: f64,
    ages: usize,
    fc: Vec<f64>,
    kernel: Vec<f64>,
    source: Vec<f64>,
    /// `int F^c(t + y) / F^c(y) i(0, y) dy`.
    initial_alive: Vec<f64>,
    init: Vec<f64>,
    period: DurationLaw,
}

fn setup(law: &InfectivityLaw, initial: &Curve, mesh: &TimeMesh) -> Result<Setup> {
    law.validate()?;
    let period = law.period_law();
    if period.has_atoms() {
        return Err(invalid(
            "the age-density solver needs an infectious period with a density",
        ));
    }
    let (n, h) = (mesh.nodes(), mesh.step());
    if (initial.step - h).abs() > 1e-12 * h {
        return Err(invalid("the initial density must use the mesh step"));
    }
    if initial.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(invalid("the initial density must be nonnegative"));
    }
    let m0 = initial.values.len().max(1);
    let ages = n + m0;
    let init: Vec<f64> = (0..ages)
        .map(|j| initial.values.get(j).copied().unwrap_or(0.0))
        .collect();
    let fc: Vec<f64> = (0..ages).map(|j| period.survival(j as f64 * h)).collect();
    let kernel = law.mean_curve_exact(h, ages).values;
    let weight = |j: usize| if j == 0 || j + 1 == m0 { 0.5 * h } else { h };
    let (mut source, mut initial_alive) = (vec![0.0; n], vec![0.0; n]);
    for t in 0..n {
        for j in 0..m0 {
            if init[j] == 0.0 || fc[j] <= 0.0 {
                continue;
            }
            let w = weight(j) * init[j] / fc[j];
            source[t] += w * kernel[j + t];
            initial_alive[t] += w * fc[j + t];
        }
    }
    Ok(Setup {
        n,
        h,
        ages,
        fc,
        kernel,
        source,
        initial_alive,
        init,
        period,
    })
}

fn run(
    law: &InfectivityLaw,
    initial: &Curve,
    mesh: &TimeMesh,
    opts: &SolveOptions,
    variant: Variant,
) -> Result<AgeDensityField> {
    let st = setup(law, initial, mesh)?;
    let (n, h) = (st.n, st.h);
    let fc_mid = survival_nodes(&st.period, n, h);
    let i0 = st.initial_alive[0];
    let s_start = match variant {
        Variant::Sir { susceptible } => susceptible,
        Variant::Sis => 1.0 - i0,
    };
    let mut b = vec![s_start * st.source[0]];
    let mut s = vec![s_start];
    let mut clamped_at = None;
    for k in 1..n {
        let base = st.source[k] + partial_conv(&st.kernel, &b, k, h);
        let half = 0.5 * h * st.kernel[0];
        b.push(0.0);
        let sk = match variant {
            Variant::Sir { .. } => {
                let s_prev = s[k - 1];
                let b_prev = b[k - 1];
                let mut x = [b_prev];
                fixed_point(
                    &mut x,
                    |x, y| {
                        let sn = (s_prev - 0.5 * h * (b_prev + x[0])).max(0.0);
                        y[0] = sn * (base + half * x[0]);
                    },
                    opts,
                    k as f64 * h,
                )?;
                b[k] = x[0];
                let raw = s_prev - 0.5 * h * (b_prev + x[0]);
                if raw < 0.0 && clamped_at.is_none() {
                    clamped_at = Some(k as f64 * h);
                }
                raw.max(0.0)
            }
            Variant::Sis => {
                let alive = st.initial_alive[k] + partial_conv(&fc_mid, &b, k, h);
                let half_fc = 0.5 * h * fc_mid[0];
                let mut x = [b[k - 1]];
                fixed_point(
                    &mut x,
                    |x, y| {
                        let sn = (1.0 - alive - half_fc * x[0]).max(0.0);
                        y[0] = sn * (base + half * x[0]);
                    },
                    opts,
                    k as f64 * h,
                )?;
                b[k] = x[0];
                let raw = 1.0 - alive - half_fc * x[0];
                if raw < 0.0 && clamped_at.is_none() {
                    clamped_at = Some(k as f64 * h);
                }
                raw.max(0.0)
            }
        };
        s.push(sk);
    }

    let ages = st.ages;
    let mut values = vec![0.0; n * ages];
    for t in 0..n {
        let row = &mut values[t * ages..(t + 1) * ages];
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j >= t {
                let back = st.fc[j - t];
                if back > 0.0 {
                    st.fc[j] / back * st.init[j - t]
                } else {
                    0.0
                }
            } else {
                st.fc[j] * b[t - j]
            };
        }
    }
    Ok(AgeDensityField {
        step: h,
        times: mesh.times(),
        ages,
        values,
        boundary: b,
        susceptible: s,
        hazard: hazard_curve(&st.period, h, ages),
        clamped_at,
    })
}

/// SIR age-density limit with initial susceptible fraction `susceptible`.
/// The initial density must be tabulated with the mesh step; its integral
/// is the initial infected fraction.
pub fn solve_age_density(
    law: &InfectivityLaw,
    initial: &Curve,
    susceptible: f64,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<AgeDensityField> {
    if !(0.0..=1.0).contains(&susceptible) {
        return Err(invalid("susceptible fraction must lie in [0, 1]"));
    }
    run(law, initial, mesh, opts, Variant::Sir { susceptible })
}

/// SIS variant: recovered individuals are susceptible again, so
/// `S = 1 - I`.
pub fn solve_sis_age_density(
    law: &InfectivityLaw,
    initial: &Curve,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<AgeDensityField> {
    run(law, initial, mesh, opts, Variant::Sis)
}

/// Endemic equilibrium of the SIS age model.
#[derive(Debug, Clone, PartialEq)]
pub struct SisEquilibrium {
    pub r0: f64,
    /// `I* = max(0, 1 - 1/R0)`.
    pub prevalence: f64,
    /// `i*(x) = I* mu F^c(x)` with `1/mu` the mean period.
    pub density: Curve,
}

pub fn sis_endemic_equilibrium(
    law: &InfectivityLaw,
    step: f64,
    horizon: f64,
) -> Result<SisEquilibrium> {
    law.validate()?;
    if !(step > 0.0 && horizon > 0.0) {
        return Err(invalid("step and horizon must be positive"));
    }
    let r0 = law.r0();
    let prevalence = if r0 > 1.0 { 1.0 - 1.0 / r0 } else { 0.0 };
    let period = law.period_law();
    let mu = 1.0 / period.mean();
    let nodes = (horizon / step).round() as usize + 1;
    let density = Curve::from_fn(step, nodes, |x| prevalence * mu * period.survival(x));
    Ok(SisEquilibrium {
        r0,
        prevalence,
        density,
    })
}
