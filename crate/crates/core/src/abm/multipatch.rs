//! Multipatch SIR with migration; infected individuals carry their own
//! patch process.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::queue::{Kind, Queue, Slots};
use super::spec::{Dynamics, ModelSpec, MultipatchSpec};
use super::trajectory::{EventKind, EventRecord, Trajectory};
use super::SimOptions;
use crate::error::{invalid, Error, Result};
use crate::mesh::TimeMesh;
use crate::rng::{open_unit, stream, Domain};

struct Carrier {
    patch: usize,
    rng: ChaCha8Rng,
}

fn pick(weights: impl Iterator<Item = f64> + Clone, u: f64) -> usize {
    let total: f64 = weights.clone().sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u * total < acc {
            return i;
        }
    }
    last
}

/// Integer counts per patch `[S, I, R]` summing to `n`.
pub(crate) fn patch_counts(spec: &MultipatchSpec, n: usize) -> Vec<[u64; 3]> {
    let mut out: Vec<[u64; 3]> = spec
        .patches
        .iter()
        .map(|p| {
            [
                (p.susceptible * n as f64).round() as u64,
                (p.infected * n as f64).round() as u64,
                (p.recovered * n as f64).round() as u64,
            ]
        })
        .collect();
    let total: i64 = out.iter().flatten().map(|v| *v as i64).sum();
    let diff = n as i64 - total;
    let largest = (0..out.len()).max_by_key(|i| out[*i][0]).unwrap_or(0);
    out[largest][0] = (out[largest][0] as i64 + diff).max(0) as u64;
    out
}

pub(crate) fn run(
    model: &ModelSpec,
    mesh: &TimeMesh,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let Dynamics::Multipatch(spec) = &model.dynamics else {
        return Err(invalid("expected the multipatch family"));
    };
    let l = spec.len();
    let n = model.population;
    let nf = n as f64;
    let g = spec.normalization;
    let mig = &spec.migration;
    let mut state = patch_counts(spec, n);
    let bounds: Vec<f64> = (0..l)
        .map(|i| {
            let kmax = spec.contact[i].iter().cloned().fold(1.0, f64::max);
            spec.patches[i].infection_rate * nf * kmax
        })
        .collect();
    let default_bound: f64 = bounds.iter().sum();
    let bound = opts.dominating_rate.unwrap_or(default_bound);
    if bound < default_bound * (1.0 - 1e-12) {
        return Err(invalid("dominating rate below the multipatch bound"));
    }
    let scale = bound / default_bound;

    let mut traj = Trajectory::new(model.dynamics.name(), n, seed, l);
    if opts.record_events {
        traj.events = Some(Vec::new());
    }
    let mut carriers: Slots<Carrier> = Slots::default();
    let mut queue = Queue::default();
    let initial_period = spec
        .initial_period
        .clone()
        .unwrap_or_else(|| spec.infectious_period.clone());
    let schedule_move = |c: &mut Carrier, id: u32, gen: u32, t: f64, queue: &mut Queue| {
        let rate = MultipatchSpec::out_rate(&mig.infected, c.patch);
        if rate > 0.0 {
            let dt = -open_unit(&mut c.rng).ln() / rate;
            queue.push(t + dt, id, gen, Kind::Migrate);
        }
    };
    let mut j_init = 0u64;
    for (p, row) in state.iter().enumerate() {
        for _ in 0..row[1] {
            let mut rng = stream(seed, Domain::Initial, j_init);
            j_init += 1;
            let eta = initial_period.sample(&mut rng);
            let (id, gen) = carriers.insert(Carrier { patch: p, rng });
            queue.push(eta, id, gen, Kind::Recover);
            schedule_move(&mut carriers.items[id as usize], id, gen, 0.0, &mut queue);
        }
    }

    let force = |state: &[[u64; 3]], i: usize| -> f64 {
        let pi = (state[i][0] + state[i][1] + state[i][2]) as f64;
        if pi == 0.0 || state[i][0] == 0 {
            return 0.0;
        }
        let contact: f64 = (0..l).map(|j| spec.contact[i][j] * state[j][1] as f64).sum();
        spec.patches[i].infection_rate * state[i][0] as f64 * contact
            / (nf.powf(1.0 - g) * pi.powf(g))
    };
    let migration_rate = |state: &[[u64; 3]]| -> f64 {
        (0..l)
            .map(|i| {
                MultipatchSpec::out_rate(&mig.susceptible, i) * state[i][0] as f64
                    + MultipatchSpec::out_rate(&mig.recovered, i) * state[i][2] as f64
            })
            .sum()
    };

    let mut prm = stream(seed, Domain::InfectionPrm, 0);
    let mut aux = stream(seed, Domain::Migration, 0);
    let draw = |rng: &mut ChaCha8Rng, rate: f64| {
        if rate > 0.0 {
            -open_unit(rng).ln() / rate
        } else {
            f64::INFINITY
        }
    };
    let mut next_candidate = draw(&mut prm, bound);
    let mut next_migration = draw(&mut aux, migration_rate(&state));
    let horizon = mesh.horizon();
    let mut k_mesh = 0;
    let mut cumulative = 0u64;
    let mut infection_index = 0u64;
    let mut events = 0u64;

    let totals = |state: &[[u64; 3]]| -> [u64; 4] {
        let mut c = [0u64; 4];
        for row in state {
            c[0] += row[0];
            c[2] += row[1];
            c[3] += row[2];
        }
        c
    };
    let record = |t: f64, traj: &mut Trajectory, state: &[[u64; 3]], a: u64| {
        traj.times.push(t);
        traj.counts.push(totals(state));
        traj.force.push(
            (0..l)
                .map(|i| spec.patches[i].infection_rate * state[i][1] as f64)
                .sum(),
        );
        traj.cumulative.push(a);
        for (p, series) in traj.patches.iter_mut().enumerate() {
            series.s.push(state[p][0]);
            series.i.push(state[p][1]);
            series.r.push(state[p][2]);
        }
    };
    let log = |traj: &mut Trajectory, t: f64, kind: EventKind, state: &[[u64; 3]]| {
        if let Some(ev) = traj.events.as_mut() {
            ev.push(EventRecord {
                time: t,
                kind,
                counts: totals(state),
            });
        }
    };

    loop {
        let t_sched = queue.next_time();
        let t_next = t_sched.min(next_candidate).min(next_migration);
        if t_next > horizon {
            break;
        }
        while k_mesh < mesh.nodes() && mesh.time(k_mesh) < t_next {
            record(mesh.time(k_mesh), &mut traj, &state, cumulative);
            k_mesh += 1;
        }
        if opts.max_events.is_some_and(|m| events >= m) {
            traj.censored = true;
            break;
        }
        events += 1;
        let mut changed = true;
        if t_sched <= next_candidate && t_sched <= next_migration {
            let ev = queue.pop().unwrap();
            if !carriers.live(ev.who, ev.gen) {
                continue;
            }
            let c = &mut carriers.items[ev.who as usize];
            match ev.kind {
                Kind::Recover => {
                    state[c.patch][1] -= 1;
                    state[c.patch][2] += 1;
                    carriers.release(ev.who);
                    traj.event_counts.recoveries += 1;
                    log(&mut traj, ev.time, EventKind::Recovery, &state);
                }
                Kind::Migrate => {
                    let from = c.patch;
                    let u: f64 = c.rng.gen();
                    let to = pick(
                        (0..l).map(|j| MultipatchSpec::rate(&mig.infected, from, j)),
                        u,
                    );
                    state[from][1] -= 1;
                    state[to][1] += 1;
                    c.patch = to;
                    schedule_move(c, ev.who, ev.gen, ev.time, &mut queue);
                    traj.event_counts.migrations += 1;
                    log(&mut traj, ev.time, EventKind::Migration, &state);
                }
                _ => unreachable!(),
            }
        } else if next_migration <= next_candidate {
            let t = next_migration;
            let u: f64 = aux.gen();
            let weights = (0..2 * l).map(|k| {
                let i = k / 2;
                if k % 2 == 0 {
                    MultipatchSpec::out_rate(&mig.susceptible, i) * state[i][0] as f64
                } else {
                    MultipatchSpec::out_rate(&mig.recovered, i) * state[i][2] as f64
                }
            });
            let k = pick(weights, u);
            let (i, comp, m) = if k % 2 == 0 {
                (k / 2, 0, &mig.susceptible)
            } else {
                (k / 2, 2, &mig.recovered)
            };
            let j = pick((0..l).map(|j| MultipatchSpec::rate(m, i, j)), aux.gen());
            state[i][comp] -= 1;
            state[j][comp] += 1;
            traj.event_counts.migrations += 1;
            log(&mut traj, t, EventKind::Migration, &state);
        } else {
            let t = next_candidate;
            next_candidate = t + draw(&mut prm, bound);
            traj.event_counts.candidates += 1;
            let i = pick(bounds.iter().cloned(), prm.gen());
            let rate = force(&state, i);
            let local = bounds[i] * scale;
            if rate > local * (1.0 + 1e-9) {
                return Err(Error::BoundViolation {
                    time: t,
                    rate,
                    bound: local,
                });
            }
            if prm.gen::<f64>() * local < rate {
                let mut rng = stream(seed, Domain::Individual, infection_index);
                infection_index += 1;
                let eta = spec.infectious_period.sample(&mut rng);
                let (id, gen) = carriers.insert(Carrier { patch: i, rng });
                queue.push(t + eta, id, gen, Kind::Recover);
                schedule_move(&mut carriers.items[id as usize], id, gen, t, &mut queue);
                state[i][0] -= 1;
                state[i][1] += 1;
                cumulative += 1;
                traj.event_counts.infections += 1;
                log(&mut traj, t, EventKind::Infection, &state);
            } else {
                changed = false;
            }
        }
        if changed {
            next_migration = t_next + draw(&mut aux, migration_rate(&state));
            let infected: u64 = state.iter().map(|r| r[1]).sum();
            if infected == 0 && traj.extinction_time.is_none() {
                traj.extinction_time = Some(t_next);
                if opts.stop_when_extinct {
                    break;
                }
            }
        }
    }
    while k_mesh < mesh.nodes() {
        record(mesh.time(k_mesh), &mut traj, &state, cumulative);
        k_mesh += 1;
    }
    Ok(traj)
}
