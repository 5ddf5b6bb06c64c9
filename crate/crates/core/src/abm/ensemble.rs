//! Replicate runs and streaming ensemble statistics.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ModelSpec;
use super::trajectory::Trajectory;
use super::{simulate, SimOptions};
use crate::error::{invalid, Result};
use crate::mesh::TimeMesh;

/// Pointwise running mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(len: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    /// Combines two summaries (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.mean[k] += d * nb / n;
            self.m2[k] += other.m2[k] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    pub fn std_error(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Pointwise statistics of every output column over a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub family: String,
    pub population: usize,
    pub seeds: Vec<u64>,
    pub times: Vec<f64>,
    pub columns: Vec<(String, RunningStats)>,
    pub extinct_runs: u64,
}

impl Ensemble {
    fn column(&self, name: &str) -> Option<&RunningStats> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn mean(&self, name: &str) -> Option<&[f64]> {
        self.column(name).map(|s| s.mean.as_slice())
    }

    pub fn variance(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name).map(|s| s.variance())
    }

    pub fn std_error(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name).map(|s| s.std_error())
    }

    /// `t, <X>_mean, <X>_var` for each trajectory column.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, digest: &str) -> Result<()> {
        let mut cols = Vec::new();
        for (name, st) in &self.columns {
            cols.push((format!("{name}_mean"), st.mean.clone()));
            cols.push((format!("{name}_var"), st.variance()));
        }
        crate::output::write_table(&mut out, digest, &self.times, &cols)
    }

    fn add(&mut self, t: &Trajectory) {
        if self.columns.is_empty() {
            self.times = t.times.clone();
            self.columns = t
                .columns()
                .into_iter()
                .map(|(n, v)| (n, RunningStats::new(v.len())))
                .collect();
        }
        for ((_, stats), (_, v)) in self.columns.iter_mut().zip(t.columns()) {
            stats.push(&v);
        }
        if t.extinction_time.is_some() {
            self.extinct_runs += 1;
        }
    }
}

fn sorted_unique(seeds: &[u64]) -> Result<Vec<u64>> {
    let set: BTreeSet<u64> = seeds.iter().cloned().collect();
    if set.len() != seeds.len() {
        return Err(invalid("replicate seeds must be distinct"));
    }
    Ok(set.into_iter().collect())
}

const CHUNK: usize = 64;

/// Runs `f` on one trajectory per seed, in parallel, and returns the
/// results in increasing seed order whatever the order of `seeds`.
pub fn replicate_map<T: Send>(
    model: &ModelSpec,
    mesh: &TimeMesh,
    seeds: &[u64],
    opts: &SimOptions,
    f: impl Fn(Trajectory) -> T + Sync,
) -> Result<Vec<T>> {
    let seeds = sorted_unique(seeds)?;
    seeds
        .par_iter()
        .map(|s| simulate(model, mesh, *s, opts).map(&f))
        .collect()
}

/// Ensemble statistics over one run per seed. The result does not depend
/// on the order of `seeds`; duplicates are rejected.
pub fn replicate(
    model: &ModelSpec,
    mesh: &TimeMesh,
    seeds: &[u64],
    opts: &SimOptions,
) -> Result<Ensemble> {
    let seeds = sorted_unique(seeds)?;
    let mut ens = Ensemble {
        family: model.dynamics.name().to_string(),
        population: model.population,
        seeds: seeds.clone(),
        times: Vec::new(),
        columns: Vec::new(),
        extinct_runs: 0,
    };
    for chunk in seeds.chunks(CHUNK) {
        let runs: Vec<Trajectory> = chunk
            .par_iter()
            .map(|s| simulate(model, mesh, *s, opts))
            .collect::<Result<_>>()?;
        for t in &runs {
            ens.add(t);
        }
    }
    Ok(ens)
}

/// `count` consecutive seeds starting at `first`.
pub fn seed_range(first: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| first + k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential_push() {
        let data: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, (k * k) as f64]).collect();
        let mut all = RunningStats::new(2);
        for x in &data {
            all.push(x);
        }
        let mut a = RunningStats::new(2);
        let mut b = RunningStats::new(2);
        for x in &data[..4] {
            a.push(x);
        }
        for x in &data[4..] {
            b.push(x);
        }
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        for k in 0..2 {
            assert!((ab.mean[k] - all.mean[k]).abs() < 1e-12);
            assert!((ab.variance()[k] - all.variance()[k]).abs() < 1e-9);
            assert!((ba.variance()[k] - ab.variance()[k]).abs() < 1e-9);
        }
        assert!((all.variance()[0] - 110.0 / 12.0).abs() < 1e-12);
    }
}
