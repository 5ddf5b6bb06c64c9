//! Multipatch SIR limit with migration and the `(S+I+R)^g` normalisation.

use nalgebra::DMatrix;

use super::kernels::partial_conv;
use super::renewal::fixed_point;
use super::{LimitSolution, SolveOptions};
use crate::abm::{Dynamics, ModelSpec, MultipatchSpec};
use crate::error::{invalid, Error, Result};
use crate::laws::DurationLaw;
use crate::mesh::TimeMesh;

/// Generator with off-diagonal migration rates and rows summing to zero.
fn generator(m: &[Vec<f64>], l: usize) -> DMatrix<f64> {
    DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            -MultipatchSpec::out_rate(m, i)
        } else {
            MultipatchSpec::rate(m, i, j)
        }
    })
}

/// `B(t) = int_[0,t] p(u) F(du)` on the mesh, with `p(u) = exp(u Q)`: the
/// right-continuous values and the kernel values (jump nodes averaged).
fn stieltjes_kernel(
    law: &DurationLaw,
    p_nodes: &[DMatrix<f64>],
    p_mids: &[DMatrix<f64>],
    h: f64,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let n = p_nodes.len();
    let mut right = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    let b0 = &p_nodes[0] * law.cdf(0.0);
    right.push(b0.clone());
    mid.push(b0);
    for k in 1..n {
        let t = k as f64 * h;
        let before = 1.0 - law.survival_left(t);
        let cont = before - law.cdf((k - 1) as f64 * h);
        let atom = law.cdf(t) - before;
        let b = &right[k - 1] + &p_mids[k] * cont + &p_nodes[k] * atom;
        mid.push(&b - &p_nodes[k] * (0.5 * atom));
        right.push(b);
    }
    (right, mid)
}

const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// Multipatch limit. Infected migration enters through the transition
/// matrices `p(t) = exp(t Q_I)`; susceptible and recovered migration through
/// their generators.
pub fn solve_multipatch_volterra(
    model: &ModelSpec,
    mesh: &TimeMesh,
    opts: &SolveOptions,
) -> Result<LimitSolution> {
    model.validate()?;
    let Dynamics::Multipatch(spec) = &model.dynamics else {
        return Err(invalid("solve_multipatch_volterra needs the multipatch family"));
    };
    if opts.contact.is_some() || opts.linearized {
        return Err(invalid("contact schedules and linearization are not supported for multipatch"));
    }
    let l = spec.len();
    let (n, h) = (mesh.nodes(), mesh.step());
    let mig = &spec.migration;
    let qs = generator(&mig.susceptible, l);
    let qi = generator(&mig.infected, l);
    let qr = generator(&mig.recovered, l);

    let step = (&qi * h).exp();
    let half = (&qi * (0.5 * h)).exp();
    let mut p_nodes = vec![DMatrix::identity(l, l)];
    let mut p_mids = vec![DMatrix::identity(l, l)];
    for k in 1..n {
        p_mids.push(&p_nodes[k - 1] * &half);
        p_nodes.push(&p_nodes[k - 1] * &step);
    }
    let initial_law = spec
        .initial_period
        .clone()
        .unwrap_or_else(|| spec.infectious_period.clone());
    let (_, b_mid) = stieltjes_kernel(&spec.infectious_period, &p_nodes, &p_mids, h);
    let (b0_right, _) = stieltjes_kernel(&initial_law, &p_nodes, &p_mids, h);
    drop(p_mids);
    // kernel[l * L + i][k] = B_{l,i}(t_k)
    let kernel: Vec<Vec<f64>> = (0..l * l)
        .map(|li| b_mid.iter().map(|b| b[(li / l, li % l)]).collect())
        .collect();
    drop(b_mid);

    let lam: Vec<f64> = spec.patches.iter().map(|p| p.infection_rate).collect();
    let kappa = &spec.contact;
    let g = spec.normalization;
    let force_of = |x: &[f64], i: usize| -> f64 {
        let (s, inf, r) = (x[i], x[l + i], x[2 * l + i]);
        let total = s + inf + r;
        if total <= 0.0 || s <= 0.0 {
            return 0.0;
        }
        let pressure: f64 = (0..l).map(|j| kappa[i][j] * x[l + j]).sum();
        lam[i] * s * pressure / total.powf(g)
    };
    let flow = |q: &DMatrix<f64>, v: &[f64], i: usize| -> f64 { (0..l).map(|j| q[(j, i)] * v[j]).sum() };

    let init: Vec<f64> = spec
        .patches
        .iter()
        .map(|p| p.susceptible)
        .chain(spec.patches.iter().map(|p| p.infected))
        .chain(spec.patches.iter().map(|p| p.recovered))
        .collect();
    let i0: Vec<f64> = init[l..2 * l].to_vec();
    let mut states = vec![init.clone()];
    let mut ups: Vec<Vec<f64>> = vec![(0..l).map(|i| force_of(&init, i)).collect()];
    // per-patch series of the force for the convolutions
    let mut ups_series: Vec<Vec<f64>> = (0..l).map(|i| vec![ups[0][i]]).collect();
    let mut acc_a = vec![0.0; l];
    let mut acc_mi = vec![0.0; l];
    let mut acc_mr = vec![0.0; l];
    let mut iterations = 0;
    for k in 1..n {
        let prev = states[k - 1].clone();
        let u_prev = ups[k - 1].clone();
        // explicit parts of sum_l int B_{l,i}(t - s) U_l(s) ds
        let base_conv: Vec<f64> = (0..l)
            .map(|i| {
                (0..l)
                    .map(|m| partial_conv(&kernel[m * l + i], &ups_series[m], k, h))
                    .sum()
            })
            .collect();
        let initial_out: Vec<f64> = (0..l)
            .map(|i| (0..l).map(|m| i0[m] * b0_right[k][(m, i)]).sum())
            .collect();
        let mig_prev: Vec<[f64; 3]> = (0..l)
            .map(|i| {
                [
                    flow(&qs, &prev[..l], i),
                    flow(&qi, &prev[l..2 * l], i),
                    flow(&qr, &prev[2 * l..], i),
                ]
            })
            .collect();
        let mut x = prev.clone();
        let it = fixed_point(
            &mut x,
            |x, y| {
                let u: Vec<f64> = (0..l).map(|i| force_of(x, i)).collect();
                for i in 0..l {
                    let conv_i: f64 = base_conv[i]
                        + (0..l)
                            .map(|m| 0.5 * h * kernel[m * l + i][0] * u[m])
                            .sum::<f64>();
                    let a = acc_a[i] + 0.5 * h * (u_prev[i] + u[i]);
                    let ms = 0.5 * h * (mig_prev[i][0] + flow(&qs, &x[..l], i));
                    let mi = acc_mi[i] + 0.5 * h * (mig_prev[i][1] + flow(&qi, &x[l..2 * l], i));
                    let mr = acc_mr[i] + 0.5 * h * (mig_prev[i][2] + flow(&qr, &x[2 * l..], i));
                    y[i] = prev[i] - 0.5 * h * (u_prev[i] + u[i]) + ms;
                    y[l + i] = init[l + i] - initial_out[i] + a - conv_i + mi;
                    y[2 * l + i] = init[2 * l + i] + initial_out[i] + conv_i + mr;
                }
            },
            opts,
            k as f64 * h,
        )?;
        iterations = iterations.max(it);
        for (j, v) in x.iter().enumerate() {
            if *v < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeState {
                    component: ["S", "I", "R"][j / l],
                    time: k as f64 * h,
                    value: *v,
                });
            }
        }
        let u: Vec<f64> = (0..l).map(|i| force_of(&x, i)).collect();
        for i in 0..l {
            acc_a[i] += 0.5 * h * (u_prev[i] + u[i]);
            acc_mi[i] += 0.5 * h * (mig_prev[i][1] + flow(&qi, &x[l..2 * l], i));
            acc_mr[i] += 0.5 * h * (mig_prev[i][2] + flow(&qr, &x[2 * l..], i));
            ups_series[i].push(u[i]);
        }
        ups.push(u);
        states.push(x);
    }

    let total = |off: usize| -> Vec<f64> {
        states.iter().map(|x| x[off..off + l].iter().sum()).collect()
    };
    let force: Vec<f64> = states
        .iter()
        .map(|x| (0..l).map(|i| lam[i] * x[l + i]).sum())
        .collect();
    let ups_total: Vec<f64> = ups.iter().map(|u| u.iter().sum()).collect();
    let a = super::kernels::cumulative(&ups_total, h);
    let mut out = LimitSolution::new(
        "multipatch",
        mesh,
        [total(0), vec![0.0; n], total(l), total(2 * l), force, a],
    );
    for i in 0..l {
        for (name, off) in [("S", 0), ("I", l), ("R", 2 * l)] {
            out.push(
                format!("{name}_p{i}"),
                states.iter().map(|x| x[off + i]).collect(),
            );
        }
    }
    out.iterations = iterations;
    Ok(out)
}
