//! Event-driven simulation of the single-population families.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::paths::{state_at, trim};
use super::queue::{Contribution, Kind, LinearSum, Queue, Slots};
use super::spec::{Dynamics, ModelSpec};
use super::trajectory::{EventKind, EventRecord, Trajectory};
use super::SimOptions;
use crate::error::{invalid, Error, Result};
use crate::laws::{DurationLaw, InfectivityLaw, JointLaw, Path};
use crate::mesh::TimeMesh;
use crate::rng::{open_unit, stream, Domain};

enum Progression {
    Sir {
        period: DurationLaw,
        initial: DurationLaw,
    },
    Seir {
        periods: JointLaw,
        initial_latency: DurationLaw,
        initial_period: DurationLaw,
    },
    Paths {
        law: InfectivityLaw,
        initial: InfectivityLaw,
    },
}

#[derive(Clone, Copy, PartialEq)]
enum AfterRecovery {
    Immune,
    Susceptible,
    Waning(f64),
}

struct Setup {
    /// `Some(lambda)` when the force is `lambda * I`.
    count_rate: Option<f64>,
    max_rate: f64,
    progression: Progression,
    after: AfterRecovery,
    demography: Option<f64>,
}

fn setup(dynamics: &Dynamics) -> Result<Setup> {
    let markov = |rate: f64, gamma: f64, after, demography| Setup {
        count_rate: Some(rate),
        max_rate: rate,
        progression: Progression::Sir {
            period: DurationLaw::exponential(gamma),
            initial: DurationLaw::exponential(gamma),
        },
        after,
        demography,
    };
    Ok(match dynamics {
        Dynamics::MarkovSir {
            infection_rate,
            recovery_rate,
        } => markov(*infection_rate, *recovery_rate, AfterRecovery::Immune, None),
        Dynamics::MarkovSis {
            infection_rate,
            recovery_rate,
        } => markov(
            *infection_rate,
            *recovery_rate,
            AfterRecovery::Susceptible,
            None,
        ),
        Dynamics::MarkovSirs {
            infection_rate,
            recovery_rate,
            immunity_loss_rate,
        } => markov(
            *infection_rate,
            *recovery_rate,
            AfterRecovery::Waning(*immunity_loss_rate),
            None,
        ),
        Dynamics::MarkovSirDemography {
            infection_rate,
            recovery_rate,
            birth_death_rate,
        } => markov(
            *infection_rate,
            *recovery_rate,
            AfterRecovery::Immune,
            Some(*birth_death_rate),
        ),
        Dynamics::NonmarkovSir {
            infection_rate,
            infectious_period,
            initial_period,
        } => Setup {
            count_rate: Some(*infection_rate),
            max_rate: *infection_rate,
            progression: Progression::Sir {
                period: infectious_period.clone(),
                initial: initial_period
                    .clone()
                    .unwrap_or_else(|| infectious_period.clone()),
            },
            after: AfterRecovery::Immune,
            demography: None,
        },
        Dynamics::NonmarkovSeir {
            infection_rate,
            periods,
            initial_latency,
            initial_period,
        } => Setup {
            count_rate: Some(*infection_rate),
            max_rate: *infection_rate,
            progression: Progression::Seir {
                periods: periods.clone(),
                initial_latency: initial_latency.clone().unwrap_or_else(|| periods.latency()),
                initial_period: initial_period.clone().unwrap_or_else(|| periods.infectious()),
            },
            after: AfterRecovery::Immune,
            demography: None,
        },
        Dynamics::VaryingInfectivity {
            infectivity,
            initial_infectivity,
        } => {
            let initial = initial_infectivity
                .clone()
                .unwrap_or_else(|| infectivity.clone());
            let (count_rate, max_rate) = match (infectivity, &initial) {
                (
                    InfectivityLaw::Constant { rate, .. },
                    InfectivityLaw::Constant { rate: r0, .. },
                ) if rate == r0 => (Some(*rate), *rate),
                _ => (None, infectivity.max_rate().max(initial.max_rate())),
            };
            let progression = match (count_rate, infectivity, &initial) {
                (
                    Some(_),
                    InfectivityLaw::Constant { period, .. },
                    InfectivityLaw::Constant { period: p0, .. },
                ) => Progression::Sir {
                    period: period.clone(),
                    initial: p0.clone(),
                },
                _ => Progression::Paths {
                    law: infectivity.clone(),
                    initial,
                },
            };
            Setup {
                count_rate,
                max_rate,
                progression,
                after: AfterRecovery::Immune,
                demography: None,
            }
        }
        _ => return Err(invalid("family not handled by the single-population engine")),
    })
}

struct Member {
    /// 1 = exposed, 2 = infectious.
    comp: u8,
    pos: usize,
    pending_period: f64,
    path: Option<Path>,
    contribution: Contribution,
}

struct Engine<'a> {
    model: &'a ModelSpec,
    setup: Setup,
    seed: u64,
    n: f64,
    counts: [u64; 4],
    cumulative: u64,
    members: Slots<Member>,
    /// Live exposed and infectious slot ids, for uniform death selection.
    lists: [Vec<u32>; 2],
    queue: Queue,
    force: LinearSum,
    infection_index: u64,
    traj: Trajectory,
    record_events: bool,
}

impl<'a> Engine<'a> {
    fn population(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn infected(&self) -> u64 {
        self.counts[1] + self.counts[2]
    }

    fn force_at(&self, t: f64) -> f64 {
        match self.setup.count_rate {
            Some(rate) => rate * self.counts[2] as f64,
            None => self.force.at(t),
        }
    }

    fn log(&mut self, t: f64, kind: EventKind) {
        if self.record_events {
            if let Some(ev) = self.traj.events.as_mut() {
                ev.push(EventRecord {
                    time: t,
                    kind,
                    counts: self.counts,
                });
            }
        }
    }

    fn record(&mut self, t: f64) {
        self.traj.times.push(t);
        self.traj.counts.push(self.counts);
        self.traj.force.push(self.force_at(t));
        self.traj.cumulative.push(self.cumulative);
    }

    fn add_member(&mut self, comp: u8, pending_period: f64, path: Option<Path>) -> (u32, u32) {
        let list = (comp - 1) as usize;
        let pos = self.lists[list].len();
        let (id, gen) = self.members.insert(Member {
            comp,
            pos,
            pending_period,
            path,
            contribution: Contribution::default(),
        });
        self.lists[list].push(id);
        self.counts[comp as usize] += 1;
        (id, gen)
    }

    fn remove_member(&mut self, id: u32) {
        let (comp, pos) = {
            let m = &self.members.items[id as usize];
            (m.comp, m.pos)
        };
        let list = (comp - 1) as usize;
        self.lists[list].swap_remove(pos);
        if pos < self.lists[list].len() {
            let moved = self.lists[list][pos];
            self.members.items[moved as usize].pos = pos;
        }
        self.counts[comp as usize] -= 1;
        self.members.release(id);
    }

    fn move_member(&mut self, id: u32, to: u8) {
        let (comp, pos) = {
            let m = &self.members.items[id as usize];
            (m.comp, m.pos)
        };
        let list = (comp - 1) as usize;
        self.lists[list].swap_remove(pos);
        if pos < self.lists[list].len() {
            let moved = self.lists[list][pos];
            self.members.items[moved as usize].pos = pos;
        }
        self.counts[comp as usize] -= 1;
        let new_list = (to - 1) as usize;
        let m = &mut self.members.items[id as usize];
        m.comp = to;
        m.pos = self.lists[new_list].len();
        self.lists[new_list].push(id);
        self.counts[to as usize] += 1;
    }

    /// Starts an infectious individual whose absolute infectivity path is
    /// `path` at time `t`.
    fn start_path(&mut self, t: f64, path: Path) -> Result<()> {
        let end = path.support_end();
        if !end.is_finite() {
            return Err(invalid("infectivity path never returns to zero"));
        }
        let (value, slope, next) = state_at(&path, t);
        let (id, gen) = self.add_member(2, 0.0, Some(path.clone()));
        let mut c = Contribution {
            value: 0.0,
            slope: 0.0,
            time: t,
        };
        c.reset(&mut self.force, t, value, slope);
        self.members.items[id as usize].contribution = c;
        if let Some(j) = next {
            self.queue.push(path.knots[j].0, id, gen, Kind::Knot(j as u16));
        }
        self.queue.push(end.max(t), id, gen, Kind::Recover);
        Ok(())
    }

    fn infect_new(&mut self, t: f64) -> Result<()> {
        let mut rng = stream(self.seed, Domain::Individual, self.infection_index);
        self.infection_index += 1;
        match &self.setup.progression {
            Progression::Sir { period, .. } => {
                let eta = period.sample(&mut rng);
                let (id, gen) = self.add_member(2, 0.0, None);
                self.queue.push(t + eta, id, gen, Kind::Recover);
            }
            Progression::Seir { periods, .. } => {
                let (xi, eta) = periods.sample(&mut rng);
                let (id, gen) = self.add_member(1, eta, None);
                self.queue.push(t + xi, id, gen, Kind::EndLatency);
            }
            Progression::Paths { law, .. } => {
                let path = trim(law.sample(&mut rng)).shifted(t);
                self.start_path(t, path)?;
            }
        }
        Ok(())
    }

    fn initialize(&mut self) -> Result<()> {
        let [s, e, i, r] = self.model.initial.counts(self.model.population);
        self.counts[0] = s as u64;
        self.counts[3] = r as u64;
        let age_law = self.model.initial.age.clone();
        for j in 0..i {
            let mut rng = stream(self.seed, Domain::Initial, j as u64);
            let age = age_law.as_ref().map(|a| a.sample(&mut rng));
            match &self.setup.progression {
                Progression::Sir { period, initial } => {
                    let eta = match age {
                        Some(a) => period.sample_residual(a, &mut rng)?,
                        None => initial.sample(&mut rng),
                    };
                    let (id, gen) = self.add_member(2, 0.0, None);
                    self.queue.push(eta, id, gen, Kind::Recover);
                }
                Progression::Seir { initial_period, .. } => {
                    let eta = initial_period.sample(&mut rng);
                    let (id, gen) = self.add_member(2, 0.0, None);
                    self.queue.push(eta, id, gen, Kind::Recover);
                }
                Progression::Paths { initial, .. } => {
                    let a = age.unwrap_or(0.0);
                    let path = trim(initial.sample_given_alive(a, &mut rng)?).shifted(-a);
                    self.start_path(0.0, path)?;
                }
            }
        }
        for j in 0..e {
            let mut rng = stream(self.seed, Domain::Initial, (i + j) as u64);
            if let Progression::Seir {
                periods,
                initial_latency,
                ..
            } = &self.setup.progression
            {
                let xi = initial_latency.sample(&mut rng);
                let (_, eta) = periods.sample(&mut rng);
                let (id, gen) = self.add_member(1, eta, None);
                self.queue.push(xi, id, gen, Kind::EndLatency);
            }
        }
        Ok(())
    }

    fn recover(&mut self, t: f64, id: u32) {
        if self.members.items[id as usize].path.take().is_some() {
            let mut c = self.members.items[id as usize].contribution;
            c.reset(&mut self.force, t, 0.0, 0.0);
        }
        self.remove_member(id);
        match self.setup.after {
            AfterRecovery::Susceptible => self.counts[0] += 1,
            AfterRecovery::Immune | AfterRecovery::Waning(_) => self.counts[3] += 1,
        }
        if self.setup.count_rate.is_none() && self.counts[2] == 0 {
            // no infectious individual left: clear rounding residue
            self.force.value = 0.0;
            self.force.slope = 0.0;
        }
        self.traj.event_counts.recoveries += 1;
        self.log(t, EventKind::Recovery);
    }

    fn knot(&mut self, t: f64, id: u32) {
        let (value, slope, next, gen) = {
            let m = &self.members.items[id as usize];
            let path = m.path.as_ref().expect("knot events only for path members");
            let (v, s, n) = state_at(path, t);
            let next = n.map(|k| (k, path.knots[k].0));
            (v, s, next, self.members.gens[id as usize])
        };
        let mut c = self.members.items[id as usize].contribution;
        c.reset(&mut self.force, t, value, slope);
        self.members.items[id as usize].contribution = c;
        if let Some((k, tk)) = next {
            self.queue.push(tk, id, gen, Kind::Knot(k as u16));
        }
    }

    fn death(&mut self, t: f64, aux: &mut ChaCha8Rng) {
        let p = self.population();
        let u = (aux.gen::<f64>() * p as f64) as u64;
        let (s, e, i) = (self.counts[0], self.counts[1], self.counts[2]);
        if u < s {
            self.counts[0] -= 1;
        } else if u < s + e + i {
            let list = if u < s + e { 0 } else { 1 };
            let k = (aux.gen::<f64>() * self.lists[list].len() as f64) as usize;
            let id = self.lists[list][k.min(self.lists[list].len() - 1)];
            self.remove_member(id);
        } else {
            self.counts[3] -= 1;
        }
        self.traj.event_counts.deaths += 1;
        self.log(t, EventKind::Death);
    }
}

pub(crate) fn run(
    model: &ModelSpec,
    mesh: &TimeMesh,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let setup = setup(&model.dynamics)?;
    let n = model.population as f64;
    let cap = 4 * model.population as u64;
    let default_bound = setup.max_rate * n * if setup.demography.is_some() { 4.0 } else { 1.0 };
    let bound = opts.dominating_rate.unwrap_or(default_bound);
    if bound < default_bound * (1.0 - 1e-12) {
        return Err(invalid(format!(
            "dominating rate {bound} is below the required {default_bound}"
        )));
    }
    let mut traj = Trajectory::new(model.dynamics.name(), model.population, seed, 0);
    if opts.record_events {
        traj.events = Some(Vec::new());
    }
    let mut eng = Engine {
        model,
        setup,
        seed,
        n,
        counts: [0; 4],
        cumulative: 0,
        members: Slots::default(),
        lists: [Vec::new(), Vec::new()],
        queue: Queue::default(),
        force: LinearSum::default(),
        infection_index: 0,
        traj,
        record_events: opts.record_events,
    };
    eng.initialize()?;

    let mut prm = stream(seed, Domain::InfectionPrm, 0);
    let mut aux = stream(seed, Domain::Auxiliary, 0);
    let exp_draw = |rng: &mut ChaCha8Rng, rate: f64| {
        if rate > 0.0 {
            -open_unit(rng).ln() / rate
        } else {
            f64::INFINITY
        }
    };
    let mut next_candidate = exp_draw(&mut prm, bound);
    let mu = eng.setup.demography.unwrap_or(0.0);
    let mut next_birth = exp_draw(&mut aux, mu * n);
    let mut next_death = exp_draw(&mut aux, mu * eng.population() as f64);
    let waning_rate = match eng.setup.after {
        AfterRecovery::Waning(r) => r,
        _ => 0.0,
    };
    let mut next_waning = exp_draw(&mut aux, waning_rate * eng.counts[3] as f64);

    let horizon = mesh.horizon();
    let mut k_mesh = 0usize;
    let mut events = 0u64;
    if eng.infected() == 0 {
        eng.traj.extinction_time = Some(0.0);
    }
    loop {
        let t_sched = eng.queue.next_time();
        let t_aux = next_birth.min(next_death).min(next_waning);
        let t_next = t_sched.min(t_aux).min(next_candidate);
        if t_next > horizon {
            break;
        }
        while k_mesh < mesh.nodes() && mesh.time(k_mesh) < t_next {
            eng.record(mesh.time(k_mesh));
            k_mesh += 1;
        }
        if opts.max_events.is_some_and(|m| events >= m) {
            eng.traj.censored = true;
            break;
        }
        events += 1;
        if eng.setup.count_rate.is_none() {
            eng.force.advance(t_next);
        }
        let mut changed = true;
        if t_sched <= t_aux && t_sched <= next_candidate {
            let ev = eng.queue.pop().unwrap();
            if !eng.members.live(ev.who, ev.gen) {
                continue;
            }
            match ev.kind {
                Kind::Recover => eng.recover(ev.time, ev.who),
                Kind::Knot(_) => {
                    eng.knot(ev.time, ev.who);
                    changed = false;
                }
                Kind::EndLatency => {
                    let eta = eng.members.items[ev.who as usize].pending_period;
                    eng.move_member(ev.who, 2);
                    eng.queue.push(ev.time + eta, ev.who, ev.gen, Kind::Recover);
                    eng.traj.event_counts.end_latencies += 1;
                    eng.log(ev.time, EventKind::EndLatency);
                }
                Kind::Migrate => unreachable!("no migration in single-population models"),
            }
        } else if t_aux <= next_candidate {
            let t = t_aux;
            if t == next_birth {
                eng.counts[0] += 1;
                eng.traj.event_counts.births += 1;
                eng.log(t, EventKind::Birth);
                next_birth = t + exp_draw(&mut aux, mu * n);
                if eng.population() > cap {
                    return Err(Error::PopulationCap {
                        time: t,
                        cap: cap as usize,
                    });
                }
            } else if t == next_death {
                eng.death(t, &mut aux);
            } else {
                eng.counts[3] -= 1;
                eng.counts[0] += 1;
                eng.traj.event_counts.immunity_losses += 1;
                eng.log(t, EventKind::ImmunityLoss);
            }
        } else {
            let t = next_candidate;
            next_candidate = t + exp_draw(&mut prm, bound);
            eng.traj.event_counts.candidates += 1;
            let rate = eng.force_at(t) * eng.counts[0] as f64 / eng.n;
            if rate > bound * (1.0 + 1e-9) {
                return Err(Error::BoundViolation {
                    time: t,
                    rate,
                    bound,
                });
            }
            let u: f64 = prm.gen::<f64>() * bound;
            if u < rate {
                eng.counts[0] -= 1;
                eng.cumulative += 1;
                eng.traj.event_counts.infections += 1;
                eng.infect_new(t)?;
                eng.log(t, EventKind::Infection);
            } else {
                changed = false;
            }
        }
        if changed {
            if mu > 0.0 {
                next_death = t_next + exp_draw(&mut aux, mu * eng.population() as f64);
            }
            if waning_rate > 0.0 {
                next_waning = t_next + exp_draw(&mut aux, waning_rate * eng.counts[3] as f64);
            }
            if eng.infected() == 0 {
                if eng.traj.extinction_time.is_none() {
                    eng.traj.extinction_time = Some(t_next);
                }
                let frozen =
                    mu == 0.0 && waning_rate == 0.0 && eng.queue.next_time().is_infinite();
                if opts.stop_when_extinct || frozen {
                    break;
                }
            }
        }
    }
    while k_mesh < mesh.nodes() {
        eng.record(mesh.time(k_mesh));
        k_mesh += 1;
    }
    Ok(eng.traj)
}
