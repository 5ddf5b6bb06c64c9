use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    I,
    R,
}

impl Compartment {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Infection,
    EndLatency,
    Recovery,
    ImmunityLoss,
    Birth,
    Death,
    Migration,
}

/// One entry of the optional event log, with counts after the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub counts: [u64; 4],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub infections: u64,
    pub end_latencies: u64,
    pub recoveries: u64,
    pub immunity_losses: u64,
    pub births: u64,
    pub deaths: u64,
    pub migrations: u64,
    /// Candidate points of the infection measure, accepted or not.
    pub candidates: u64,
}

/// Counts of one patch over time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatchSeries {
    pub s: Vec<u64>,
    pub i: Vec<u64>,
    pub r: Vec<u64>,
}

/// One realization recorded on a time mesh (values right-continuous: the
/// state at `t_k` includes the events at `t_k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub family: String,
    pub population: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// `[S, E, I, R]` counts per mesh node.
    pub counts: Vec<[u64; 4]>,
    /// Total force of infection (sum of current infectivities).
    pub force: Vec<f64>,
    /// Cumulative number of infections since time 0.
    pub cumulative: Vec<u64>,
    pub patches: Vec<PatchSeries>,
    /// Sum of individual susceptibilities, for the varying-susceptibility
    /// family.
    pub susceptibility: Option<Vec<f64>>,
    pub events: Option<Vec<EventRecord>>,
    pub event_counts: EventCounts,
    /// First time with no exposed or infected individual.
    pub extinction_time: Option<f64>,
    /// Set when the run stopped at the event budget before the horizon.
    pub censored: bool,
    /// Largest number of infections of one individual, tracked by the
    /// varying-susceptibility family.
    pub max_infections_per_individual: Option<u32>,
}

impl Trajectory {
    pub(crate) fn new(family: &str, population: usize, seed: u64, patches: usize) -> Self {
        Trajectory {
            family: family.to_string(),
            population,
            seed,
            times: Vec::new(),
            counts: Vec::new(),
            force: Vec::new(),
            cumulative: Vec::new(),
            patches: vec![PatchSeries::default(); patches],
            susceptibility: None,
            events: None,
            event_counts: EventCounts::default(),
            extinction_time: None,
            censored: false,
            max_infections_per_individual: None,
        }
    }

    /// Compartment counts divided by the reference population `N`.
    pub fn fraction(&self, c: Compartment) -> Vec<f64> {
        let n = self.population as f64;
        self.counts.iter().map(|x| x[c.index()] as f64 / n).collect()
    }

    pub fn force_fraction(&self) -> Vec<f64> {
        let n = self.population as f64;
        self.force.iter().map(|x| x / n).collect()
    }

    pub fn cumulative_fraction(&self) -> Vec<f64> {
        let n = self.population as f64;
        self.cumulative.iter().map(|x| *x as f64 / n).collect()
    }

    pub fn susceptibility_fraction(&self) -> Option<Vec<f64>> {
        let n = self.population as f64;
        self.susceptibility
            .as_ref()
            .map(|z| z.iter().map(|x| x / n).collect())
    }

    /// Named columns scaled by `N`, in output order.
    pub fn columns(&self) -> Vec<(String, Vec<f64>)> {
        let n = self.population as f64;
        let mut cols = vec![
            ("S".to_string(), self.fraction(Compartment::S)),
            ("E".to_string(), self.fraction(Compartment::E)),
            ("I".to_string(), self.fraction(Compartment::I)),
            ("R".to_string(), self.fraction(Compartment::R)),
            ("F".to_string(), self.force_fraction()),
            ("A".to_string(), self.cumulative_fraction()),
        ];
        if let Some(z) = self.susceptibility_fraction() {
            cols.push(("Z".to_string(), z));
        }
        for (p, series) in self.patches.iter().enumerate() {
            for (name, v) in [("S", &series.s), ("I", &series.i), ("R", &series.r)] {
                cols.push((
                    format!("{name}_p{p}"),
                    v.iter().map(|x| *x as f64 / n).collect(),
                ));
            }
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, mut out: W, digest: &str) -> Result<()> {
        let cols = self.columns();
        crate::output::write_table(&mut out, digest, &self.times, &cols)
    }

    pub fn manifest(&self, digest: &str) -> serde_json::Value {
        serde_json::json!({
            "family": self.family,
            "population": self.population,
            "seed": self.seed,
            "config_digest": digest,
            "event_counts": self.event_counts,
            "extinction_time": self.extinction_time,
            "censored": self.censored,
        })
    }
}
