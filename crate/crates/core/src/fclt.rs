//! Gaussian fluctuation limits of the SIR and varying-infectivity models.
//!
//! The limit `(S^, I^, R^)` (or `(S^, F^)` with infectivity) solves a linear
//! Volterra system driven by centered Gaussian processes. Drivers are
//! tabulated on the mesh of a deterministic limit, sampled jointly by a
//! Cholesky factor of their covariance, and pushed through the system with
//! the trapezoid stepping of the limit solvers.
//!
//! Driver registry:
//!
//! | name  | meaning                                                   |
//! |-------|-----------------------------------------------------------|
//! | `M_A` | martingale of the infection counting process              |
//! | `I0`  | fluctuation of the initially infected still infected      |
//! | `R0`  | fluctuation of the initially infected already recovered   |
//! | `I1`  | same for individuals infected after time 0                |
//! | `R1`  |                                                           |
//! | `F0`  | infectivity noise of the initially infected               |
//! | `F1`  | infectivity noise of the newly infected                   |
//! | `F2`  | `int lambda_bar(t - s) dM_A(s)`                           |
//!
//! Drivers come in independent blocks: the initial block (`I0, R0`, plus
//! `F0`) and the fresh block (`M_A, I1, R1`, plus `F1, F2`). Within the
//! fresh block the covariance is assembled as a sum over mesh cells of
//! Gram matrices of the per-infection vector
//! `(1, 1{eta > u}, 1{eta <= u}, lambda(u) - lambda_bar(u), lambda_bar(u))`
//! at the cell midpoint, weighted by the infection flux. Every displayed
//! covariance integral is the midpoint rule of that sum, and the assembled
//! matrix is positive semidefinite by construction.
//!
//! Initial fluctuations `S^(0), I^(0)` are taken to be zero: the simulator
//! starts from deterministic counts.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;

use crate::abm::{Dynamics, ModelSpec, RunningStats};
use crate::error::{invalid, Error, Result};
use crate::laws::{DurationLaw, InfectivityLaw};
use crate::mesh::TimeMesh;
use crate::output::{write_rows, write_table};
use crate::rng::{stream, Domain};
use crate::volterra::kernels::{conv, initial_survival, partial_conv, survival_nodes};
use crate::volterra::LimitSolution;

/// Which fluctuation system the drivers feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcltFamily {
    /// `(S^, I^, R^)` with constant infectivity.
    Sir,
    /// `(S^, F^, I^, R^)` with random infectivity.
    VaryingInfectivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcltOptions {
    /// Panel size for infectivity moments of laws without closed forms.
    pub panel_size: usize,
    pub panel_seed: u64,
    /// Largest accepted joint covariance dimension.
    pub max_dimension: usize,
}

impl Default for FcltOptions {
    fn default() -> Self {
        FcltOptions {
            panel_size: 10_000,
            panel_seed: 0,
            max_dimension: 6000,
        }
    }
}

/// Jointly Gaussian drivers; `cov[a * n + i, b * n + j]` is
/// `Cov(names[a](t_i), names[b](t_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverBlock {
    pub names: Vec<String>,
    pub cov: DMatrix<f64>,
}

impl DriverBlock {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.cov.nrows() == 0 {
            return 0.0;
        }
        self.cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Lower factor `L` with `L L^T = cov`, restricted to the rows of
    /// positive variance (the others are identically zero).
    fn factor(&self) -> Result<(Vec<usize>, DMatrix<f64>)> {
        let live: Vec<usize> = (0..self.cov.nrows())
            .filter(|&k| self.cov[(k, k)] > 0.0)
            .collect();
        let m = live.len();
        let sub = DMatrix::from_fn(m, m, |r, c| self.cov[(live[r], live[c])]);
        for jitter in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
            let mut a = sub.clone();
            for k in 0..m {
                a[(k, k)] += jitter;
            }
            if let Some(ch) = a.cholesky() {
                return Ok((live, ch.l()));
            }
        }
        let min_eigenvalue = sub
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        Err(Error::NotPositiveSemiDefinite { min_eigenvalue })
    }
}

/// Mesh coefficients of the linear system.
#[derive(Debug, Clone, PartialEq)]
struct System {
    /// Coefficient of `S^` in the linearized flux.
    flux_s: Vec<f64>,
    /// Coefficient of `I^` (SIR) or `F^` (infectivity) in the flux.
    flux_x: Vec<f64>,
    /// Kernel of the `I^` (SIR) or `F^` equation.
    kernel: Vec<f64>,
    /// Survival kernel for `I^` and `R^`.
    survival: Vec<f64>,
}

/// Driver covariances on the mesh of a deterministic limit.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDriverSpec {
    pub family: FcltFamily,
    pub step: f64,
    pub times: Vec<f64>,
    /// Independent blocks: initial, then fresh.
    pub blocks: Vec<DriverBlock>,
    system: System,
}

impl GaussianDriverSpec {
    pub fn names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.names.clone()).collect()
    }

    /// `Cov(a(t_i), b(t_j))`; zero across blocks.
    pub fn covariance(&self, a: &str, i: usize, b: &str, j: usize) -> Option<f64> {
        let n = self.times.len();
        let (ba, ka) = self.locate(a)?;
        let (bb, kb) = self.locate(b)?;
        if ba != bb {
            return Some(0.0);
        }
        Some(self.blocks[ba].cov[(ka * n + i, kb * n + j)])
    }

    pub fn variance(&self, name: &str) -> Option<Vec<f64>> {
        (0..self.times.len())
            .map(|i| self.covariance(name, i, name, i))
            .collect()
    }

    fn locate(&self, name: &str) -> Option<(usize, usize)> {
        self.blocks
            .iter()
            .enumerate()
            .find_map(|(b, blk)| blk.index(name).map(|k| (b, k)))
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.min_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }

    /// `t, Var_<name>...` for every driver.
    pub fn write_variances<W: Write>(&self, mut out: W, digest: &str) -> Result<()> {
        let cols: Vec<(String, Vec<f64>)> = self
            .names()
            .into_iter()
            .map(|n| {
                let v = self.variance(&n).unwrap_or_default();
                (format!("Var_{n}"), v)
            })
            .collect();
        write_table(&mut out, digest, &self.times, &cols)
    }

    /// Long form `t, t', cov` of one driver pair.
    pub fn write_covariance<W: Write>(
        &self,
        mut out: W,
        digest: &str,
        a: &str,
        b: &str,
    ) -> Result<()> {
        if self.locate(a).is_none() || self.locate(b).is_none() {
            return Err(invalid(format!("unknown driver pair {a}, {b}")));
        }
        let n = self.times.len();
        let rows = (0..n).flat_map(|i| {
            (0..n).map(move |j| {
                vec![
                    self.times[i],
                    self.times[j],
                    self.covariance(a, i, b, j).unwrap_or(0.0),
                ]
            })
        });
        write_rows(&mut out, digest, &["t", "t_prime", "cov"], rows)
    }
}

// ------------------------------------------------------------------ moments

/// Moments of one infectivity realization `(lambda(u), 1{eta > u})` at a
/// list of increasing lags.
enum Moments {
    Exact {
        rate: f64,
        alive: Vec<f64>,
    },
    Panel {
        count: usize,
        alive: Vec<f64>,
        mean: Vec<f64>,
        /// `E[lambda(u_p) lambda(u_q)]`, row major.
        second: Vec<f64>,
        /// `E[lambda(u_p) 1{eta > u_q}]`, row major.
        cross: Vec<f64>,
    },
}

impl Moments {
    fn len(&self) -> usize {
        match self {
            Moments::Exact { alive, .. } => alive.len(),
            Moments::Panel { alive, .. } => alive.len(),
        }
    }

    fn alive(&self, p: usize) -> f64 {
        match self {
            Moments::Exact { alive, .. } | Moments::Panel { alive, .. } => alive[p],
        }
    }

    fn mean(&self, p: usize) -> f64 {
        match self {
            Moments::Exact { rate, alive } => rate * alive[p],
            Moments::Panel { mean, .. } => mean[p],
        }
    }

    fn second(&self, p: usize, q: usize) -> f64 {
        match self {
            Moments::Exact { rate, alive } => rate * rate * alive[p.max(q)],
            Moments::Panel { count, second, .. } => second[p * count + q],
        }
    }

    fn cross(&self, p: usize, q: usize) -> f64 {
        match self {
            Moments::Exact { rate, alive } => rate * alive[p.max(q)],
            Moments::Panel { count, cross, .. } => cross[p * count + q],
        }
    }

    /// Panel of `size` realizations drawn by `draw`, each returning the
    /// infectivity at the lags and the remaining period.
    fn panel(
        lags: &[f64],
        size: usize,
        mut draw: impl FnMut() -> Result<(Vec<f64>, f64)>,
    ) -> Result<Moments> {
        let l = lags.len();
        let mut alive = vec![0.0; l];
        let mut mean = vec![0.0; l];
        let mut second = vec![0.0; l * l];
        let mut cross = vec![0.0; l * l];
        for _ in 0..size {
            let (lam, eta) = draw()?;
            let live = lags.partition_point(|u| *u < eta);
            for p in 0..live {
                alive[p] += 1.0;
            }
            let support = lam.iter().rposition(|v| *v != 0.0).map_or(0, |p| p + 1);
            for p in 0..support {
                mean[p] += lam[p];
                let row = p * l;
                for q in 0..support {
                    second[row + q] += lam[p] * lam[q];
                }
                for q in 0..live {
                    cross[row + q] += lam[p];
                }
            }
        }
        let w = 1.0 / size as f64;
        for v in alive
            .iter_mut()
            .chain(mean.iter_mut())
            .chain(second.iter_mut())
            .chain(cross.iter_mut())
        {
            *v *= w;
        }
        Ok(Moments::Panel {
            count: l,
            alive,
            mean,
            second,
            cross,
        })
    }
}

/// Infectivity law of the newly infected and of the initially infected.
struct Laws {
    family: FcltFamily,
    fresh: InfectivityLaw,
    initial: InfectivityLaw,
    age: Option<DurationLaw>,
    /// Contact rate multiplying `I` in the SIR flux.
    rate: f64,
}

fn laws_of(model: &ModelSpec) -> Result<Laws> {
    let age = model.initial.age.clone();
    match &model.dynamics {
        Dynamics::MarkovSir {
            infection_rate,
            recovery_rate,
        } => {
            let law = InfectivityLaw::constant(
                *infection_rate,
                DurationLaw::exponential(*recovery_rate),
            );
            Ok(Laws {
                family: FcltFamily::Sir,
                fresh: law.clone(),
                initial: law,
                age: None,
                rate: *infection_rate,
            })
        }
        Dynamics::NonmarkovSir {
            infection_rate,
            infectious_period,
            initial_period,
        } => {
            let fresh = InfectivityLaw::constant(*infection_rate, infectious_period.clone());
            let initial = match (initial_period, &age) {
                (Some(p), None) => InfectivityLaw::constant(*infection_rate, p.clone()),
                _ => fresh.clone(),
            };
            Ok(Laws {
                family: FcltFamily::Sir,
                fresh,
                initial,
                age,
                rate: *infection_rate,
            })
        }
        Dynamics::VaryingInfectivity {
            infectivity,
            initial_infectivity,
        } => Ok(Laws {
            family: FcltFamily::VaryingInfectivity,
            fresh: infectivity.clone(),
            initial: initial_infectivity
                .clone()
                .unwrap_or_else(|| infectivity.clone()),
            age,
            rate: 1.0,
        }),
        other => Err(invalid(format!(
            "fluctuation limits are available for markov-sir, nonmarkov-sir and \
             varying-infectivity, not {}",
            other.name()
        ))),
    }
}

fn fresh_moments(laws: &Laws, lags: &[f64], opts: &FcltOptions) -> Result<Moments> {
    let period = laws.fresh.period_law();
    let alive: Vec<f64> = lags.iter().map(|u| period.survival(*u)).collect();
    if let Some(rate) = laws.fresh.constant_rate() {
        return Ok(Moments::Exact { rate, alive });
    }
    let mut rng = stream(opts.panel_seed, Domain::Panel, 10);
    Moments::panel(lags, opts.panel_size, || {
        let path = laws.fresh.sample(&mut rng);
        let lam = lags.iter().map(|u| path.value(*u)).collect();
        Ok((lam, path.support_end()))
    })
}

fn initial_moments(laws: &Laws, lags: &[f64], opts: &FcltOptions) -> Result<Moments> {
    if let (Some(rate), None) = (laws.initial.constant_rate(), &laws.age) {
        let alive = lags
            .iter()
            .map(|u| laws.initial.period_law().survival(*u))
            .collect();
        return Ok(Moments::Exact { rate, alive });
    }
    if laws.family == FcltFamily::Sir {
        let alive = initial_survival(
            &laws.fresh.period_law(),
            &laws.initial.period_law(),
            laws.age.as_ref(),
            lags,
        );
        return Ok(Moments::Exact {
            rate: laws.rate,
            alive,
        });
    }
    let mut rng = stream(opts.panel_seed, Domain::Panel, 11);
    Moments::panel(lags, opts.panel_size, || {
        let y = laws.age.as_ref().map_or(0.0, |a| a.sample(&mut rng));
        let path = laws.initial.sample_given_alive(y, &mut rng)?;
        let lam = lags.iter().map(|u| path.value(y + u)).collect();
        Ok((lam, (path.support_end() - y).max(0.0)))
    })
}

// --------------------------------------------------------------- assembly

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Component {
    Count,
    Infected,
    Recovered,
    Noise,
    Mean,
}

fn component(name: &str) -> Component {
    match name {
        "M_A" => Component::Count,
        "I0" | "I1" => Component::Infected,
        "R0" | "R1" => Component::Recovered,
        "F0" | "F1" => Component::Noise,
        _ => Component::Mean,
    }
}

/// `E[x_a(u_p) x_b(u_q)]` for the per-infection vector; `bar` is the exact
/// mean infectivity at the lags (the `F2` component).
fn second_moment(m: &Moments, bar: &[f64], a: Component, b: Component, p: usize, q: usize) -> f64 {
    use Component::*;
    let al = |k: usize| m.alive(k);
    let noise_alive = |p: usize, q: usize| m.cross(p, q) - m.mean(p) * al(q);
    match (a, b) {
        (Count, Count) => 1.0,
        (Count, Infected) => al(q),
        (Count, Recovered) => 1.0 - al(q),
        (Count, Noise) => 0.0,
        (Count, Mean) => bar[q],
        (Infected, Infected) => al(p.max(q)),
        (Infected, Recovered) => al(p) - al(p.max(q)),
        (Recovered, Recovered) => 1.0 - al(p.min(q)),
        (Noise, Noise) => m.second(p, q) - m.mean(p) * m.mean(q),
        (Noise, Infected) => noise_alive(p, q),
        (Noise, Recovered) => -noise_alive(p, q),
        (Noise, Mean) => 0.0,
        (Mean, Mean) => bar[p] * bar[q],
        (Mean, Infected) => bar[p] * al(q),
        (Mean, Recovered) => bar[p] * (1.0 - al(q)),
        _ => second_moment(m, bar, b, a, q, p),
    }
}

/// Centered covariance of one initially infected individual.
fn initial_cov(m: &Moments, a: Component, b: Component, p: usize, q: usize) -> f64 {
    let first = |c: Component, k: usize| match c {
        Component::Infected => m.alive(k),
        Component::Recovered => 1.0 - m.alive(k),
        _ => m.mean(k),
    };
    let zero: [f64; 0] = [];
    let raw = match (a, b) {
        (Component::Noise, Component::Noise) => m.second(p, q),
        (Component::Noise, _) | (_, Component::Noise) => {
            let (p, q, other) = if a == Component::Noise { (p, q, b) } else { (q, p, a) };
            let base = m.cross(p, q);
            if other == Component::Infected {
                base
            } else {
                m.mean(p) - base
            }
        }
        _ => second_moment(m, &zero, a, b, p, q),
    };
    raw - first(a, p) * first(b, q)
}

/// Covariances of the drivers along `limit`.
pub fn driver_covariances(
    model: &ModelSpec,
    limit: &LimitSolution,
    opts: &FcltOptions,
) -> Result<GaussianDriverSpec> {
    model.validate()?;
    if model.initial.exposed > 0.0 {
        return Err(invalid("fluctuation limits need an initial state without exposed"));
    }
    let laws = laws_of(model)?;
    laws.fresh.validate()?;
    laws.initial.validate()?;
    let n = limit.times.len();
    let h = limit.step;
    if n < 2 {
        return Err(invalid("the limit needs at least two mesh points"));
    }
    let (initial_names, fresh_names): (&[&str], &[&str]) = match laws.family {
        FcltFamily::Sir => (&["I0", "R0"], &["M_A", "I1", "R1"]),
        FcltFamily::VaryingInfectivity => (&["F0", "I0", "R0"], &["M_A", "F1", "F2", "I1", "R1"]),
    };
    let dim = (initial_names.len() + fresh_names.len()) * n;
    if dim > opts.max_dimension {
        return Err(invalid(format!(
            "covariance dimension {dim} exceeds {}; use a coarser mesh",
            opts.max_dimension
        )));
    }

    // Fresh block: cell k has midpoint (k + 1/2) h and the lag from it to
    // t_i is u_{i-k-1} = (i - k - 1/2) h.
    let s = limit.s();
    let force = limit.force();
    let weight: Vec<f64> = (0..n - 1)
        .map(|k| h * 0.5 * (s[k] * force[k] + s[k + 1] * force[k + 1]))
        .collect();
    let lags: Vec<f64> = (0..n - 1).map(|m| (m as f64 + 0.5) * h).collect();
    let fm = fresh_moments(&laws, &lags, opts)?;
    let bar: Vec<f64> = lags.iter().map(|u| laws.fresh.mean(*u)).collect();
    let comps: Vec<Component> = fresh_names.iter().map(|x| component(x)).collect();
    let d = comps.len();
    let mut fresh = DMatrix::zeros(d * n, d * n);
    for (a, ca) in comps.iter().enumerate() {
        for (b, cb) in comps.iter().enumerate().skip(a) {
            // Gram table over lag pairs, then diagonal sums.
            let l = fm.len();
            let table: Vec<f64> = (0..l * l)
                .map(|x| second_moment(&fm, &bar, *ca, *cb, x / l, x % l))
                .collect();
            for i in 1..n {
                for j in 1..n {
                    let mut acc = 0.0;
                    for k in 0..i.min(j) {
                        acc += weight[k] * table[(i - k - 1) * l + (j - k - 1)];
                    }
                    fresh[(a * n + i, b * n + j)] = acc;
                    fresh[(b * n + j, a * n + i)] = acc;
                }
            }
        }
    }

    // Initial block, scaled by the initial infected fraction.
    let i0 = model.initial.infected;
    let times = limit.times.clone();
    let im = initial_moments(&laws, &times, opts)?;
    let comps0: Vec<Component> = initial_names.iter().map(|x| component(x)).collect();
    let d0 = comps0.len();
    let mut initial = DMatrix::zeros(d0 * n, d0 * n);
    for (a, ca) in comps0.iter().enumerate() {
        for (b, cb) in comps0.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    initial[(a * n + i, b * n + j)] = i0 * initial_cov(&im, *ca, *cb, i, j);
                }
            }
        }
    }
    let initial = (&initial + initial.transpose()) * 0.5;

    let period = laws.fresh.period_law();
    let survival = survival_nodes(&period, n, h);
    let system = match laws.family {
        FcltFamily::Sir => System {
            flux_s: limit.i().iter().map(|x| laws.rate * x).collect(),
            flux_x: s.iter().map(|x| laws.rate * x).collect(),
            kernel: survival.clone(),
            survival,
        },
        FcltFamily::VaryingInfectivity => System {
            flux_s: force.to_vec(),
            flux_x: s.to_vec(),
            kernel: laws.fresh.mean_curve_exact(h, n).values,
            survival,
        },
    };
    let names = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
    Ok(GaussianDriverSpec {
        family: laws.family,
        step: h,
        times,
        blocks: vec![
            DriverBlock {
                names: names(initial_names),
                cov: initial,
            },
            DriverBlock {
                names: names(fresh_names),
                cov: fresh,
            },
        ],
        system,
    })
}

// ----------------------------------------------------------------- solving

/// Named driver paths on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPaths {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DriverPaths {
    pub fn zeros(spec: &GaussianDriverSpec) -> Self {
        let names = spec.names();
        let values = vec![vec![0.0; spec.times.len()]; names.len()];
        DriverPaths { names, values }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k].as_slice())
    }

    pub fn scaled(&self, c: f64) -> Self {
        DriverPaths {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| c * x).collect())
                .collect(),
        }
    }
}

/// Precomputed factors for repeated draws.
pub struct DriverSampler {
    factors: Vec<(Vec<usize>, DMatrix<f64>)>,
}

impl DriverSampler {
    pub fn new(spec: &GaussianDriverSpec) -> Result<Self> {
        let factors = spec
            .blocks
            .iter()
            .map(|b| b.factor())
            .collect::<Result<Vec<_>>>()?;
        Ok(DriverSampler { factors })
    }

    /// Draw number `index` under `seed`.
    pub fn draw(&self, spec: &GaussianDriverSpec, seed: u64, index: u64) -> DriverPaths {
        let n = spec.times.len();
        let mut rng = stream(seed, Domain::Panel, (1 << 32) + index);
        let mut out = DriverPaths::zeros(spec);
        let mut slot = 0;
        for (block, (live, l)) in spec.blocks.iter().zip(&self.factors) {
            let z = DVector::from_fn(live.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = l * z;
            for (r, k) in live.iter().enumerate() {
                out.values[slot + k / n][k % n] = x[r];
            }
            slot += block.names.len();
        }
        out
    }
}

/// Fluctuation path `(S^, I^, R^)` or `(S^, F^, I^, R^)` for given drivers;
/// missing drivers count as zero. The map is linear in the drivers.
pub fn solve_fluctuation(
    spec: &GaussianDriverSpec,
    drivers: &DriverPaths,
) -> Result<Vec<(String, Vec<f64>)>> {
    let n = spec.times.len();
    let h = spec.step;
    let zero = vec![0.0; n];
    let get = |name: &str| -> Result<&[f64]> {
        match drivers.get(name) {
            Some(v) if v.len() == n => Ok(v),
            Some(_) => Err(invalid(format!("driver {name} has the wrong length"))),
            None => Ok(&zero),
        }
    };
    let m = get("M_A")?;
    let (i0, i1, r0, r1) = (get("I0")?, get("I1")?, get("R0")?, get("R1")?);
    let sys = &spec.system;
    let vi = spec.family == FcltFamily::VaryingInfectivity;
    // Source of the second unknown: `I0 + I1` or `F0 + F1 + F2`.
    let source: Vec<f64> = if vi {
        let (f0, f1, f2) = (get("F0")?, get("F1")?, get("F2")?);
        (0..n).map(|k| f0[k] + f1[k] + f2[k]).collect()
    } else {
        (0..n).map(|k| i0[k] + i1[k]).collect()
    };

    let mut s = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    x[0] = source[0];
    s[0] = -m[0];
    v[0] = sys.flux_s[0] * s[0] + sys.flux_x[0] * x[0];
    let c = 0.5 * h * sys.kernel[0];
    for k in 1..n {
        let a = s[k - 1] - (m[k] - m[k - 1]) - 0.5 * h * v[k - 1];
        let b = source[k] + partial_conv(&sys.kernel, &v, k, h);
        let (p, q) = (sys.flux_s[k], sys.flux_x[k]);
        v[k] = (p * a + q * b) / (1.0 + 0.5 * h * p - q * c);
        s[k] = a - 0.5 * h * v[k];
        x[k] = b + c * v[k];
    }
    let recovered_kernel: Vec<f64> = sys.survival.iter().map(|f| 1.0 - f).collect();
    let r: Vec<f64> = (0..n)
        .map(|k| r0[k] + r1[k] + conv(&recovered_kernel, &v, k, h))
        .collect();
    let mut out = vec![("S".to_string(), s)];
    if vi {
        let i: Vec<f64> = (0..n)
            .map(|k| i0[k] + i1[k] + conv(&sys.survival, &v, k, h))
            .collect();
        out.push(("F".to_string(), x));
        out.push(("I".to_string(), i));
    } else {
        out.push(("I".to_string(), x));
    }
    out.push(("R".to_string(), r));
    Ok(out)
}

/// Pointwise statistics of sampled fluctuation paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationEnsemble {
    pub family: FcltFamily,
    pub times: Vec<f64>,
    pub columns: Vec<(String, RunningStats)>,
    /// The first few paths, for plotting.
    pub paths: Vec<Vec<(String, Vec<f64>)>>,
}

impl FluctuationEnsemble {
    pub fn stats(&self, name: &str) -> Option<&RunningStats> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn count(&self) -> u64 {
        self.columns.first().map_or(0, |(_, s)| s.count)
    }

    /// `t, <X>_mean, <X>_var` for each solved component.
    pub fn write_csv<W: Write>(&self, mut out: W, digest: &str) -> Result<()> {
        let mut cols = Vec::new();
        for (name, st) in &self.columns {
            cols.push((format!("{name}_mean"), st.mean.clone()));
            cols.push((format!("{name}_var"), st.variance()));
        }
        write_table(&mut out, digest, &self.times, &cols)
    }
}

const KEPT_PATHS: usize = 8;

/// Samples `n_paths` fluctuation paths. Path `k` uses its own stream, so
/// the result does not depend on scheduling.
pub fn sample_fluctuations(
    spec: &GaussianDriverSpec,
    n_paths: usize,
    seed: u64,
) -> Result<FluctuationEnsemble> {
    if n_paths == 0 {
        return Err(invalid("need at least one path"));
    }
    let sampler = DriverSampler::new(spec)?;
    let n = spec.times.len();
    let names: Vec<String> = solve_fluctuation(spec, &DriverPaths::zeros(spec))?
        .into_iter()
        .map(|(name, _)| name)
        .collect();
    let mut columns: Vec<(String, RunningStats)> = names
        .iter()
        .map(|name| (name.clone(), RunningStats::new(n)))
        .collect();
    let mut paths = Vec::new();
    const CHUNK: usize = 64;
    for start in (0..n_paths).step_by(CHUNK) {
        let end = (start + CHUNK).min(n_paths);
        let solved: Vec<Vec<(String, Vec<f64>)>> = (start..end)
            .into_par_iter()
            .map(|k| solve_fluctuation(spec, &sampler.draw(spec, seed, k as u64)))
            .collect::<Result<_>>()?;
        for path in solved {
            for ((_, st), (_, values)) in columns.iter_mut().zip(&path) {
                st.push(values);
            }
            if paths.len() < KEPT_PATHS {
                paths.push(path);
            }
        }
    }
    Ok(FluctuationEnsemble {
        family: spec.family,
        times: spec.times.clone(),
        columns,
        paths,
    })
}

/// Scaled compensated Poisson paths `N^{-1/2} (P(N t) - N t)` on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonClt {
    pub times: Vec<f64>,
    /// `paths[k][i]` at `times[i]`.
    pub paths: Vec<Vec<f64>>,
}

impl PoissonClt {
    pub fn variance(&self) -> Vec<f64> {
        let mut st = RunningStats::new(self.times.len());
        for p in &self.paths {
            st.push(p);
        }
        st.variance()
    }

    /// Sample correlation of the increments over `[t_a, t_b]` and
    /// `[t_b, t_c]` (node indices).
    pub fn increment_correlation(&self, a: usize, b: usize, c: usize) -> f64 {
        let x: Vec<f64> = self.paths.iter().map(|p| p[b] - p[a]).collect();
        let y: Vec<f64> = self.paths.iter().map(|p| p[c] - p[b]).collect();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (u, v) in x.iter().zip(&y) {
            sxy += (u - mx) * (v - my);
            sxx += (u - mx) * (u - mx);
            syy += (v - my) * (v - my);
        }
        sxy / (sxx * syy).sqrt()
    }
}

/// Draws `n_paths` compensated Poisson paths at scale `scale`, with
/// independent Poisson increments between mesh nodes.
pub fn poisson_clt_check(
    scale: f64,
    mesh: &TimeMesh,
    n_paths: usize,
    seed: u64,
) -> Result<PoissonClt> {
    if !(scale > 0.0) || n_paths == 0 {
        return Err(invalid("scale and path count must be positive"));
    }
    let times = mesh.times();
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, Domain::Panel, (2 << 32) + k as u64);
            let mut count = 0.0;
            let mut path = vec![0.0; times.len()];
            for i in 1..times.len() {
                let mean = scale * (times[i] - times[i - 1]);
                let d = Poisson::new(mean).map_err(|e| invalid(e.to_string()))?;
                count += rng.sample::<f64, _>(d);
                path[i] = (count - scale * times[i]) / scale.sqrt();
            }
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PoissonClt { times, paths })
}
