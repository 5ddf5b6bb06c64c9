//! Fixed point for varying infectivity and varying susceptibility.
//!
//! Unknowns: the mean susceptibility `x = Z` and the force `y = F`.
//! `x(t) = E[g0(t) e^{-int_0^t g0 y}] + int_0^t E[g(t-s) e^{-int_s^t g(r-s) y(r) dr}] x(s) y(s) ds`,
//! `y(t) = I(0) lambda0(t) + int_0^t lambda(t-s) x(s) y(s) ds`.
//! The expectations over susceptibility trajectories are panel averages:
//! quadrature against the period laws when the waning curve is
//! deterministic, a fixed Monte Carlo sample otherwise. The Picard
//! iteration runs window by window so that each window is a contraction.

use super::kernels::{conv_all, cumulative, initial_survival, partial_conv};
use super::sir::initial_mean;
use super::{LimitSolution, PanelMode, SolveOptions};
use crate::abm::{Dynamics, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::laws::{DurationLaw, SusceptibilityLaw};
use crate::mesh::TimeMesh;
use crate::rng::{stream, Domain};

/// Weighted susceptibility trajectories tabulated on the mesh.
struct Panel {
    weights: Vec<f64>,
    /// `table[m * nodes + j]`
    table: Vec<f64>,
    monte_carlo: bool,
}

impl Panel {
    fn len(&self) -> usize {
        self.weights.len()
    }

    fn tabulate(nodes: usize, h: f64, members: &[(f64, Box<dyn Fn(f64) -> f64 + '_>)], mc: bool) -> Self {
        let delta = 1e-9 * h;
        let mut table = Vec::with_capacity(members.len() * nodes);
        for (_, g) in members {
            for j in 0..nodes {
                let t = j as f64 * h;
                table.push(if j == 0 { g(0.0) } else { 0.5 * (g(t - delta) + g(t)) });
            }
        }
        Panel {
            weights: members.iter().map(|(w, _)| *w).collect(),
            table,
            monte_carlo: mc,
        }
    }

    fn empty() -> Self {
        Panel {
            weights: Vec::new(),
            table: Vec::new(),
            monte_carlo: false,
        }
    }
}

type Member<'a> = (f64, Box<dyn Fn(f64) -> f64 + 'a>);

/// How new infections enter the susceptibility average.
enum Fresh {
    /// Panel of `gamma` as a function of time since infection, weighted by
    /// the infection flux `x y`.
    Infection(Panel),
    /// Deterministic waning `gamma(a) = g(a - eta)`: a single trajectory
    /// `g` as a function of time since recovery, weighted by the recovery
    /// flux, which is the infection flux convolved with the period law
    /// (a density on the mesh, or atoms).
    Recovery {
        panel: Panel,
        density: Option<Vec<f64>>,
        atoms: Vec<(f64, f64)>,
    },
}

impl Fresh {
    fn panel(&self) -> &Panel {
        match self {
            Fresh::Infection(p) | Fresh::Recovery { panel: p, .. } => p,
        }
    }

    /// Flux series weighting the panel, on nodes `0..=b`; entries up to
    /// `keep` are final and left untouched.
    fn flux(&self, u: &[f64], out: &mut Vec<f64>, keep: usize, b: usize, h: f64) {
        out.truncate(keep + 1);
        for k in out.len()..=b {
            let v = match self {
                Fresh::Infection(_) => u[k],
                Fresh::Recovery { density, atoms, .. } => {
                    let mut acc = match density {
                        Some(f) => super::kernels::conv(f, u, k, h),
                        None => 0.0,
                    };
                    for (v, w) in atoms {
                        let pos = (k as f64 * h - v) / h;
                        if pos >= 0.0 {
                            let i = pos.floor() as usize;
                            let frac = pos - i as f64;
                            let hi = if frac > 0.0 { u[(i + 1).min(b)] } else { 0.0 };
                            acc += w * (u[i] * (1.0 - frac) + hi * frac);
                        }
                    }
                    acc
                }
            };
            out.push(v);
        }
    }
}

fn fresh_mode(
    period: &DurationLaw,
    law: &SusceptibilityLaw,
    nodes: usize,
    h: f64,
    opts: &SolveOptions,
) -> Fresh {
    if opts.panel_mode == PanelMode::Auto {
        if let Some(g) = law.waning_curve() {
            let g: &(dyn Fn(f64) -> f64 + Send + Sync) = &*g;
            let member: Vec<Member> = vec![(1.0, Box::new(|a| g(a)))];
            let panel = Panel::tabulate(nodes, h, &member, false);
            let pure_atoms = match period {
                DurationLaw::Deterministic { value } => Some(vec![(*value, 1.0)]),
                DurationLaw::Empirical { values, weights } => {
                    Some(values.iter().cloned().zip(weights.iter().cloned()).collect())
                }
                _ => None,
            };
            if let Some(atoms) = pure_atoms {
                return Fresh::Recovery {
                    panel,
                    density: None,
                    atoms,
                };
            }
            if !period.has_atoms() {
                // Central differences of the cdf: the discrete law keeps
                // unit mass under the trapezoid rule.
                let cdf = |j: usize| period.cdf(j as f64 * h);
                let density = (0..nodes)
                    .map(|j| match j {
                        0 => cdf(1) / h,
                        _ => (cdf(j + 1) - cdf(j - 1)) / (2.0 * h),
                    })
                    .collect();
                return Fresh::Recovery {
                    panel,
                    density: Some(density),
                    atoms: Vec::new(),
                };
            }
        }
    }
    let mut rng = stream(opts.panel_seed, Domain::Panel, 1);
    let m = opts.panel_samples.max(1);
    let members: Vec<Member> = (0..m)
        .map(|_| {
            let eta = period.sample(&mut rng);
            let path = law.sample_after(eta, &mut rng);
            let f: Box<dyn Fn(f64) -> f64> = Box::new(move |a| path.value(a));
            (1.0 / m as f64, f)
        })
        .collect();
    Fresh::Infection(Panel::tabulate(nodes, h, &members, true))
}

/// Panel of `gamma0` for the initially infected, in absolute time.
fn infected_panel(
    period: &DurationLaw,
    age: Option<&DurationLaw>,
    law: &SusceptibilityLaw,
    nodes: usize,
    h: f64,
    opts: &SolveOptions,
) -> Result<Panel> {
    if opts.panel_mode == PanelMode::Auto {
        if let (Some(g), Some(rule)) = (law.waning_curve(), period_rule(period, age, nodes, h)) {
            let g: &(dyn Fn(f64) -> f64 + Send + Sync) = &*g;
            // On a lattice rule everyone is still infected at time 0.
            let lattice = !period.has_atoms();
            let members: Vec<Member> = rule
                .into_iter()
                .map(|(eta, w)| {
                    let f: Box<dyn Fn(f64) -> f64> = Box::new(move |t| {
                        if t < eta || (lattice && t == 0.0) {
                            0.0
                        } else {
                            g(t - eta)
                        }
                    });
                    (w, f)
                })
                .collect();
            return Ok(Panel::tabulate(nodes, h, &members, false));
        }
    }
    let mut rng = stream(opts.panel_seed, Domain::Panel, 2);
    let m = opts.panel_samples.max(1);
    let mut members: Vec<Member> = Vec::with_capacity(m);
    for _ in 0..m {
        let y = age.map_or(0.0, |a| a.sample(&mut rng));
        let remaining = period.sample_residual(y, &mut rng)?;
        let path = law.sample_after(remaining, &mut rng);
        members.push((1.0 / m as f64, Box::new(move |t| path.value(t))));
    }
    Ok(Panel::tabulate(nodes, h, &members, true))
}

/// Quadrature rule for a remaining period (or a time since recovery).
/// Laws without atoms are lumped onto the mesh lattice, so that the jumps
/// of `g(t - eta)` fall on nodes; atoms are kept as they are. With an age
/// law the remaining period has survival `E[F^c(Y + t) / F^c(Y)]`. Points
/// past `nodes` mesh steps are dropped.
fn period_rule(
    law: &DurationLaw,
    age: Option<&DurationLaw>,
    nodes: usize,
    h: f64,
) -> Option<Vec<(f64, f64)>> {
    if law.has_atoms() {
        return match (age, law) {
            (None, DurationLaw::Deterministic { value }) => Some(vec![(*value, 1.0)]),
            (None, DurationLaw::Empirical { values, weights }) => {
                Some(values.iter().cloned().zip(weights.iter().cloned()).collect())
            }
            (None, _) => law.rule(),
            (Some(_), _) => None,
        };
    }
    let horizon = law.truncation_horizon(1e-12);
    let last = ((horizon / h).ceil() as usize).min(nodes.saturating_sub(1).max(1)).min(MAX_RULE);
    // Mass of the cell of half-width h/2 around each lattice point.
    let edges: Vec<f64> = (0..=last).map(|j| (j as f64 + 0.5) * h).collect();
    let survival = initial_survival(law, law, age, &edges);
    let rule = (0..=last)
        .map(|j| {
            let above = if j == 0 { 1.0 } else { survival[j - 1] };
            (j as f64 * h, above - survival[j])
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    Some(rule)
}

const MAX_RULE: usize = 200_000;

/// Panel of `gamma0` for the initially recovered, in absolute time.
fn recovered_panel(
    since: Option<&DurationLaw>,
    law: &SusceptibilityLaw,
    nodes: usize,
    h: f64,
    opts: &SolveOptions,
) -> Panel {
    if opts.panel_mode == PanelMode::Auto {
        if let Some(g) = law.waning_curve() {
            let rule = match since {
                None => Some(vec![(0.0, 1.0)]),
                Some(l) => period_rule(l, None, usize::MAX, h),
            };
            if let Some(rule) = rule {
                let g: &(dyn Fn(f64) -> f64 + Send + Sync) = &*g;
                let members: Vec<Member> = rule
                    .into_iter()
                    .map(|(xi, w)| {
                        let f: Box<dyn Fn(f64) -> f64> = Box::new(move |t| g(t + xi));
                        (w, f)
                    })
                    .collect();
                return Panel::tabulate(nodes, h, &members, false);
            }
        }
    }
    let mut rng = stream(opts.panel_seed, Domain::Panel, 3);
    let m = opts.panel_samples.max(1);
    let members: Vec<Member> = (0..m)
        .map(|_| {
            let xi = since.map_or(0.0, |l| l.sample(&mut rng));
            let path = law.sample_after(-xi, &mut rng);
            let f: Box<dyn Fn(f64) -> f64> = Box::new(move |t| path.value(t));
            (1.0 / m as f64, f)
        })
        .collect();
    Panel::tabulate(nodes, h, &members, true)
}

/// `exp(-h/2 (ga ya + gb yb))`, the trapezoid increment of an exposure
/// integral, with the common all-or-nothing susceptibility precomputed.
#[inline]
fn increment(ga: f64, gb: f64, ya: f64, yb: f64, both: f64, h: f64) -> f64 {
    if ga == 1.0 && gb == 1.0 {
        both
    } else if ga == 0.0 && gb == 0.0 {
        1.0
    } else {
        (-0.5 * h * (ga * ya + gb * yb)).exp()
    }
}

/// Accumulates a panel over the window for a given force iterate. For each
/// window node `j`, returns the weighted mean and the sample variance of
/// the member values (zero for quadrature panels).
struct Moments {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            mean: vec![0.0; len],
            var: vec![0.0; len],
        }
    }

    fn finish(sum: Vec<f64>, sumsq: Vec<f64>, panel: &Panel) -> Self {
        let m = panel.len() as f64;
        let var = if panel.monte_carlo && panel.len() > 1 {
            sum.iter()
                .zip(&sumsq)
                .map(|(s, q)| ((q - s * s / m) / (m - 1.0)).max(0.0))
                .collect()
        } else {
            vec![0.0; sum.len()]
        };
        let mean = if panel.monte_carlo {
            sum.iter().map(|s| s / m).collect()
        } else {
            sum
        };
        Moments { mean, var }
    }
}

struct State<'a> {
    h: f64,
    nodes: usize,
    fresh: &'a Panel,
    initial: [&'a Panel; 2],
    /// `exp(-int_{t_k}^{t_cur} gamma_m(r - t_k) y(r) dr)`, `[m * nodes + k]`.
    decay: Vec<f64>,
    /// `int_0^{t_cur} gamma0_m y` per initial panel.
    exposure: [Vec<f64>; 2],
    /// `int_0^{t_cur} y`.
    total: f64,
    cur: usize,
}

impl State<'_> {
    fn both(&self, y: &[f64], j: usize) -> f64 {
        (-0.5 * self.h * (y[j - 1] + y[j])).exp()
    }

    /// Initial-panel moments at window nodes `a..=b`.
    fn initial_moments(&self, which: usize, y: &[f64], b: usize) -> Moments {
        let panel = self.initial[which];
        let (h, n, a) = (self.h, self.nodes, self.cur + 1);
        let w = b + 1 - a;
        if panel.len() == 0 {
            return Moments::new(w);
        }
        let mut sum = vec![0.0; w];
        let mut sumsq = vec![0.0; w];
        for m in 0..panel.len() {
            let g = &panel.table[m * n..(m + 1) * n];
            let mut ex = self.exposure[which][m];
            for j in a..=b {
                ex += 0.5 * h * (g[j - 1] * y[j - 1] + g[j] * y[j]);
                let v = g[j] * (-ex).exp();
                let scale = if panel.monte_carlo { 1.0 } else { panel.weights[m] };
                sum[j - a] += scale * v;
                sumsq[j - a] += v * v;
            }
        }
        Moments::finish(sum, sumsq, panel)
    }

    /// Fresh moments at window nodes `a..=b`, given the weighting flux on
    /// `0..=b`.
    fn fresh_moments(&self, y: &[f64], u: &[f64], b: usize) -> Moments {
        let panel = self.fresh;
        let (h, n, a, cur) = (self.h, self.nodes, self.cur + 1, self.cur);
        let w = b + 1 - a;
        let both: Vec<f64> = (a..=b).map(|j| self.both(y, j)).collect();
        let mut sum = vec![0.0; w];
        let mut sumsq = vec![0.0; w];
        let mut member = vec![0.0; w];
        for m in 0..panel.len() {
            let g = &panel.table[m * n..(m + 1) * n];
            member.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..=b {
                if u[k] == 0.0 {
                    continue;
                }
                let mut e = if k <= cur { self.decay[m * n + k] } else { 1.0 };
                for j in a.max(k)..=b {
                    if j > k {
                        e *= increment(g[j - 1 - k], g[j - k], y[j - 1], y[j], both[j - a], h);
                    }
                    let gj = g[j - k];
                    if gj != 0.0 {
                        let wk = if k == 0 || k == j { 0.5 * h } else { h };
                        member[j - a] += wk * gj * e * u[k];
                    }
                }
            }
            let scale = if panel.monte_carlo { 1.0 } else { panel.weights[m] };
            for (i, v) in member.iter().enumerate() {
                sum[i] += scale * v;
                sumsq[i] += v * v;
            }
        }
        Moments::finish(sum, sumsq, panel)
    }

    /// Advances the stored exposures from `cur` to `b`.
    fn commit(&mut self, y: &[f64], b: usize) {
        let (h, n, a, cur) = (self.h, self.nodes, self.cur + 1, self.cur);
        let both: Vec<f64> = (a..=b).map(|j| self.both(y, j)).collect();
        for m in 0..self.fresh.len() {
            let g = &self.fresh.table[m * n..(m + 1) * n];
            for k in 0..=b {
                let mut e = if k <= cur { self.decay[m * n + k] } else { 1.0 };
                for j in a.max(k + 1)..=b {
                    e *= increment(g[j - 1 - k], g[j - k], y[j - 1], y[j], both[j - a], h);
                }
                self.decay[m * n + k] = e;
            }
        }
        for which in 0..2 {
            let panel = self.initial[which];
            for m in 0..panel.len() {
                let g = &panel.table[m * n..(m + 1) * n];
                for j in a..=b {
                    self.exposure[which][m] += 0.5 * h * (g[j - 1] * y[j - 1] + g[j] * y[j]);
                }
            }
        }
        for j in a..=b {
            self.total += 0.5 * h * (y[j - 1] + y[j]);
        }
        self.cur = b;
    }
}

/// Solves the varying-infectivity, varying-susceptibility limit. Columns:
/// `Z` (mean susceptibility) and its Monte Carlo standard error `Z_se`,
/// `F`, `I`, `S` (never infected) and `R = 1 - S - I`.
pub fn solve_vivs_fixed_point(
    model: &ModelSpec,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<LimitSolution> {
    model.validate()?;
    let Dynamics::VaryingSusceptibility {
        infectivity,
        susceptibility,
        initial_infectivity,
        since_recovery,
    } = &model.dynamics
    else {
        return Err(invalid(
            "solve_vivs_fixed_point needs the varying-susceptibility family",
        ));
    };
    if opts.contact.is_some() || opts.linearized {
        return Err(invalid(
            "contact schedules and linearization are not supported for this family",
        ));
    }
    if opts.panel_samples == 0 {
        return Err(invalid("panel_samples must be at least 1"));
    }
    let init = &model.initial;
    if init.exposed > 0.0 {
        return Err(invalid("this family has no exposed compartment"));
    }
    let (n, h) = (mesh.nodes(), mesh.step());
    let initial = initial_infectivity.as_ref().unwrap_or(infectivity);
    let kernel = infectivity.mean_curve_exact(h, n).values;
    let source: Vec<f64> = initial_mean(initial, init.age.as_ref(), mesh)
        .iter()
        .map(|v| init.infected * v)
        .collect();
    let period = infectivity.period_law();
    let initial_period = initial.period_law();

    let fresh_mode = fresh_mode(&period, susceptibility, n, h, opts);
    let fresh = fresh_mode.panel();
    let pan_i = if init.infected > 0.0 {
        infected_panel(&initial_period, init.age.as_ref(), susceptibility, n, h, opts)?
    } else {
        Panel::empty()
    };
    let pan_r = if init.recovered > 0.0 {
        recovered_panel(since_recovery.as_ref(), susceptibility, n, h, opts)
    } else {
        Panel::empty()
    };
    let coef = [init.infected, init.recovered];
    let lambda_star = infectivity.max_rate().max(initial.max_rate());
    let window = ((0.5 / lambda_star.max(1e-12)) / h).floor().max(1.0) as usize;

    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut se = vec![0.0; n];
    let panel_mean0 = |p: &Panel| -> f64 {
        if p.len() == 0 {
            return 0.0;
        }
        let s: f64 = (0..p.len())
            .map(|m| p.table[m * n] * if p.monte_carlo { 1.0 } else { p.weights[m] })
            .sum();
        if p.monte_carlo {
            s / p.len() as f64
        } else {
            s
        }
    };
    x[0] = init.susceptible + coef[0] * panel_mean0(&pan_i) + coef[1] * panel_mean0(&pan_r);
    y[0] = source[0];
    let mut u = vec![0.0; n];
    u[0] = x[0] * y[0];
    let mut flux = Vec::with_capacity(n);

    let mut state = State {
        h,
        nodes: n,
        fresh,
        initial: [&pan_i, &pan_r],
        decay: vec![1.0; fresh.len() * n],
        exposure: [vec![0.0; pan_i.len()], vec![0.0; pan_r.len()]],
        total: 0.0,
        cur: 0,
    };
    let mut iterations = 0;
    while state.cur + 1 < n {
        let a = state.cur + 1;
        let b = (a + window - 1).min(n - 1);
        for j in a..=b {
            y[j] = opts.picard_start.unwrap_or(y[a - 1]);
            x[j] = x[a - 1];
            u[j] = x[j] * y[j];
        }
        let mut converged = false;
        for it in 1..=opts.picard_max_iterations {
            fresh_mode.flux(&u, &mut flux, state.cur, b, h);
            let fm = state.fresh_moments(&y, &flux, b);
            let im = [state.initial_moments(0, &y, b), state.initial_moments(1, &y, b)];
            let mut change: f64 = 0.0;
            let mut total = state.total;
            for j in a..=b {
                total += 0.5 * h * (y[j - 1] + y[j]);
                let i = j - a;
                let xn = init.susceptible * (-total).exp()
                    + coef[0] * im[0].mean[i]
                    + coef[1] * im[1].mean[i]
                    + fm.mean[i];
                let var = panel_var(fresh, fm.var[i])
                    + coef[0] * coef[0] * panel_var(&pan_i, im[0].var[i])
                    + coef[1] * coef[1] * panel_var(&pan_r, im[1].var[i]);
                se[j] = var.sqrt();
                change = change.max((xn - x[j]).abs());
                x[j] = xn;
            }
            for j in a..=b {
                let base = source[j] + partial_conv(&kernel, &u, j, h);
                let denom = 1.0 - 0.5 * h * kernel[0] * x[j];
                let yn = if denom > 0.0 { base / denom } else { f64::INFINITY };
                change = change.max((yn - y[j]).abs());
                y[j] = yn;
                u[j] = x[j] * y[j];
            }
            if !change.is_finite() {
                break;
            }
            if change < opts.picard_tolerance {
                iterations = iterations.max(it);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                time: b as f64 * h,
                iterations: opts.picard_max_iterations,
                residual: f64::NAN,
            });
        }
        for j in a..=b {
            if x[j] < -1e-8 {
                return Err(Error::NegativeState {
                    component: "Z",
                    time: j as f64 * h,
                    value: x[j],
                });
            }
            if x[j] > 1.0 + 1e-6 {
                return Err(Error::BoundViolation {
                    time: j as f64 * h,
                    rate: x[j],
                    bound: 1.0,
                });
            }
        }
        state.commit(&y, b);
    }

    let fc = super::kernels::survival_nodes(&period, n, h);
    let f0c = initial_survival(&initial_period, &initial_period, init.age.as_ref(), &mesh.times());
    let ci = conv_all(&fc, &u, h);
    let inf: Vec<f64> = (0..n).map(|k| init.infected * f0c[k] + ci[k]).collect();
    let ycum = cumulative(&y, h);
    let s: Vec<f64> = ycum.iter().map(|c| init.susceptible * (-c).exp()).collect();
    let r: Vec<f64> = (0..n).map(|k| 1.0 - s[k] - inf[k]).collect();
    let a = cumulative(&u, h);
    let mut out = LimitSolution::new(
        "varying-susceptibility",
        mesh,
        [s, vec![0.0; n], inf, r, y, a],
    );
    out.push("Z", x);
    out.push("Z_se", se);
    out.iterations = iterations;
    Ok(out)
}

/// Variance of a panel mean from the member variance.
fn panel_var(panel: &Panel, member_var: f64) -> f64 {
    if panel.monte_carlo && panel.len() > 0 {
        member_var / panel.len() as f64
    } else {
        0.0
    }
}
