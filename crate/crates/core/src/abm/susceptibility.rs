//! Varying infectivity and susceptibility: every individual carries its own
//! susceptibility path and is thinned individually.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::paths::{state_at, trim};
use super::queue::{Contribution, Kind, LinearSum, Queue};
use super::spec::{Dynamics, ModelSpec};
use super::trajectory::{EventKind, EventRecord, Trajectory};
use super::SimOptions;
use crate::error::{invalid, Error, Result};
use crate::laws::Path;
use crate::mesh::TimeMesh;
use crate::rng::{open_unit, stream, Domain};

struct Person {
    infected: bool,
    ever_infected: bool,
    infections: u32,
    /// Susceptibility in absolute time.
    gamma: Path,
    /// Infectivity in absolute time while infected.
    path: Option<Path>,
    contribution: Contribution,
    rng: Option<ChaCha8Rng>,
    gen: u32,
}

fn always_susceptible() -> Path {
    Path::constant(vec![(f64::MIN, 1.0)])
}

pub(crate) fn run(
    model: &ModelSpec,
    mesh: &TimeMesh,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let Dynamics::VaryingSusceptibility {
        infectivity,
        susceptibility,
        initial_infectivity,
        since_recovery,
    } = &model.dynamics
    else {
        return Err(invalid("expected the varying-susceptibility family"));
    };
    let initial_law = initial_infectivity.as_ref().unwrap_or(infectivity);
    let n = model.population;
    let nf = n as f64;
    let lambda_star = infectivity.max_rate().max(initial_law.max_rate());
    let default_bound = lambda_star * nf;
    let bound = opts.dominating_rate.unwrap_or(default_bound);
    if bound < default_bound * (1.0 - 1e-12) {
        return Err(invalid("dominating rate below lambda* N"));
    }
    let per_person = bound / nf;

    let [s0, _, i0, r0] = model.initial.counts(n);
    let mut people: Vec<Person> = Vec::with_capacity(n);
    let mut queue = Queue::default();
    let mut force = LinearSum::default();
    let mut counts = [0u64; 4];
    let mut traj = Trajectory::new(model.dynamics.name(), n, seed, 0);
    traj.susceptibility = Some(Vec::new());
    if opts.record_events {
        traj.events = Some(Vec::new());
    }

    let start_infection = |p: &mut Person,
                           id: u32,
                           t: f64,
                           path: Path,
                           queue: &mut Queue,
                           force: &mut LinearSum,
                           rng: &mut ChaCha8Rng|
     -> Result<()> {
        let end = path.support_end();
        if !end.is_finite() {
            return Err(invalid("infectivity path never returns to zero"));
        }
        p.gen = p.gen.wrapping_add(1);
        p.infected = true;
        p.ever_infected = true;
        p.gamma = susceptibility.sample_after(end, rng);
        let (value, slope, next) = state_at(&path, t);
        let mut c = Contribution {
            value: 0.0,
            slope: 0.0,
            time: t,
        };
        c.reset(force, t, value, slope);
        p.contribution = c;
        if let Some(j) = next {
            queue.push(path.knots[j].0, id, p.gen, Kind::Knot(j as u16));
        }
        queue.push(end.max(t), id, p.gen, Kind::Recover);
        p.path = Some(path);
        Ok(())
    };

    for k in 0..n {
        let mut p = Person {
            infected: false,
            ever_infected: false,
            infections: 0,
            gamma: always_susceptible(),
            path: None,
            contribution: Contribution::default(),
            rng: None,
            gen: 0,
        };
        let mut rng = stream(seed, Domain::Initial, k as u64);
        if k >= s0 && k < s0 + i0 {
            let age = match &model.initial.age {
                Some(a) => a.sample(&mut rng),
                None => 0.0,
            };
            let path = trim(initial_law.sample_given_alive(age, &mut rng)?).shifted(-age);
            start_infection(&mut p, k as u32, 0.0, path, &mut queue, &mut force, &mut rng)?;
            counts[2] += 1;
        } else if k >= s0 + i0 && k < s0 + i0 + r0 {
            let xi = since_recovery.as_ref().map_or(0.0, |l| l.sample(&mut rng));
            p.gamma = susceptibility.sample_after(-xi, &mut rng);
            p.ever_infected = true;
            counts[3] += 1;
        } else {
            counts[0] += 1;
        }
        people.push(p);
    }

    let mut prm = stream(seed, Domain::InfectionPrm, 0);
    let mut next_candidate = -open_unit(&mut prm).ln() / bound;
    let horizon = mesh.horizon();
    let mut k_mesh = 0usize;
    let mut cumulative = 0u64;
    let mut max_inf = 0u32;
    let mut events = 0u64;

    let record = |t: f64, traj: &mut Trajectory, people: &[Person], counts: [u64; 4], f: f64, a: u64| {
        let z: f64 = people.iter().map(|p| p.gamma.value(t)).sum();
        traj.times.push(t);
        traj.counts.push(counts);
        traj.force.push(f);
        traj.cumulative.push(a);
        traj.susceptibility.as_mut().unwrap().push(z);
    };

    loop {
        let t_sched = queue.next_time();
        let t_next = t_sched.min(next_candidate);
        if t_next > horizon {
            break;
        }
        while k_mesh < mesh.nodes() && mesh.time(k_mesh) < t_next {
            let tm = mesh.time(k_mesh);
            record(tm, &mut traj, &people, counts, force.at(tm), cumulative);
            k_mesh += 1;
        }
        if opts.max_events.is_some_and(|m| events >= m) {
            traj.censored = true;
            break;
        }
        events += 1;
        force.advance(t_next);
        if t_sched <= next_candidate {
            let ev = queue.pop().unwrap();
            let p = &mut people[ev.who as usize];
            if p.gen != ev.gen {
                continue;
            }
            match ev.kind {
                Kind::Knot(_) => {
                    let path = p.path.as_ref().unwrap();
                    let (v, s, next) = state_at(path, ev.time);
                    let next = next.map(|j| (j, path.knots[j].0));
                    let mut c = p.contribution;
                    c.reset(&mut force, ev.time, v, s);
                    p.contribution = c;
                    if let Some((j, tj)) = next {
                        queue.push(tj, ev.who, ev.gen, Kind::Knot(j as u16));
                    }
                }
                Kind::Recover => {
                    let mut c = p.contribution;
                    c.reset(&mut force, ev.time, 0.0, 0.0);
                    p.contribution = c;
                    p.path = None;
                    p.infected = false;
                    counts[2] -= 1;
                    counts[3] += 1;
                    if counts[2] == 0 {
                        force.value = 0.0;
                        force.slope = 0.0;
                    }
                    traj.event_counts.recoveries += 1;
                    if let Some(ev_log) = traj.events.as_mut() {
                        ev_log.push(EventRecord {
                            time: ev.time,
                            kind: EventKind::Recovery,
                            counts,
                        });
                    }
                }
                _ => unreachable!(),
            }
        } else {
            let t = next_candidate;
            next_candidate = t + -open_unit(&mut prm).ln() / bound;
            traj.event_counts.candidates += 1;
            let k = ((prm.gen::<f64>() * nf) as usize).min(n - 1);
            let u: f64 = prm.gen::<f64>() * per_person;
            let p = &mut people[k];
            if p.infected {
                continue;
            }
            let rate = p.gamma.value(t) * force.at(t) / nf;
            if rate > per_person * (1.0 + 1e-9) {
                return Err(Error::BoundViolation {
                    time: t,
                    rate: rate * nf,
                    bound,
                });
            }
            if u < rate {
                let was_ever = p.ever_infected;
                let mut rng = p
                    .rng
                    .take()
                    .unwrap_or_else(|| stream(seed, Domain::Individual, k as u64));
                let path = trim(infectivity.sample(&mut rng)).shifted(t);
                start_infection(p, k as u32, t, path, &mut queue, &mut force, &mut rng)?;
                p.rng = Some(rng);
                p.infections += 1;
                max_inf = max_inf.max(p.infections);
                counts[if was_ever { 3 } else { 0 }] -= 1;
                counts[2] += 1;
                cumulative += 1;
                traj.event_counts.infections += 1;
                if let Some(ev_log) = traj.events.as_mut() {
                    ev_log.push(EventRecord {
                        time: t,
                        kind: EventKind::Infection,
                        counts,
                    });
                }
            }
        }
        if counts[2] == 0 {
            if traj.extinction_time.is_none() {
                traj.extinction_time = Some(t_next);
            }
            if opts.stop_when_extinct || queue.next_time().is_infinite() {
                break;
            }
        }
    }
    while k_mesh < mesh.nodes() {
        let tm = mesh.time(k_mesh);
        record(tm, &mut traj, &people, counts, force.at(tm), cumulative);
        k_mesh += 1;
    }
    traj.max_infections_per_individual = Some(max_inf);
    Ok(traj)
}
