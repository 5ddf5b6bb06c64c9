//! Scenario files: parsing, overrides, canonical form and digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abm::ModelSpec;
use crate::error::{Error, Result};
use crate::laws::InfectivityLaw;
use crate::mesh::TimeMesh;
use crate::volterra::{ContactSchedule, PanelMode, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Solve,
    Converge,
    Fluctuations,
    Pde,
    Analytics,
    Vivs,
    Compare,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Solve => "solve",
            Experiment::Converge => "converge",
            Experiment::Fluctuations => "fluctuations",
            Experiment::Pde => "pde",
            Experiment::Analytics => "analytics",
            Experiment::Vivs => "vivs",
            Experiment::Compare => "compare",
        }
    }
}

/// Solver switches; every field has the library default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub linearized: bool,
    pub panel_samples: usize,
    pub panel_mode: PanelMode,
    pub picard_tolerance: f64,
    pub picard_max_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_start: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverConfig {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            damping: d.damping,
            linearized: d.linearized,
            panel_samples: d.panel_samples,
            panel_mode: d.panel_mode,
            picard_tolerance: d.picard_tolerance,
            picard_max_iterations: d.picard_max_iterations,
            picard_start: d.picard_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub populations: Vec<usize>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            populations: vec![100, 1_000, 10_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluctuationsConfig {
    pub paths: usize,
    pub panel_size: usize,
    pub max_dimension: usize,
}

impl Default for FluctuationsConfig {
    fn default() -> Self {
        FluctuationsConfig {
            paths: 1000,
            panel_size: 10_000,
            max_dimension: 6000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeVariant {
    Sir,
    Sis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub variant: PdeVariant,
    /// Keep every `stride`-th node of the long-form field.
    pub stride: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            variant: PdeVariant::Sir,
            stride: 10,
        }
    }
}

/// Two infectivity laws run through the same contact drop. The `rate` (or
/// covid `scale`) of each law is recalibrated so that both grow at
/// `growth_rate` before `intervention_day` and at `decay_rate` after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub intervention_day: f64,
    pub growth_rate: f64,
    pub decay_rate: f64,
    /// Fraction ever infected at time 0, spread along the stable age profile.
    pub initial_fraction: f64,
    pub markov: InfectivityLaw,
    pub nonmarkov: InfectivityLaw,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub horizon: f64,
    pub mesh_step: f64,
    pub seed: u64,
    pub replicates: usize,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<ContactSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluctuations: Option<FluctuationsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ScenarioConfig {
    /// Parses a scenario after applying `key=value` overrides to the raw
    /// TOML tree.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| config_error(e.message().to_string()))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| config_error(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`ScenarioConfig::parse`], for the experiment named on the
    /// command line; a different `experiment` in the file is an error.
    pub fn parse_for(
        text: &str,
        experiment: Experiment,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| config_error(e.message().to_string()))?;
        if let Some(v) = table.get("experiment") {
            if v.as_str() != Some(experiment.name()) {
                return Err(config_error(format!(
                    "config declares experiment {v}, command is {}",
                    experiment.name()
                )));
            }
        }
        let mut all = vec![("experiment".to_string(), format!("\"{}\"", experiment.name()))];
        all.extend_from_slice(overrides);
        Self::parse(text, &all)
    }

    pub fn validate(&self) -> Result<()> {
        TimeMesh::new(self.horizon, self.mesh_step)?;
        if self.replicates == 0 {
            return Err(config_error("replicates must be positive"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(config_error("seed must fit in a TOML integer"));
        }
        if let Some(c) = &self.contact {
            c.validate()?;
        }
        match (self.experiment, &self.model) {
            (Experiment::Compare, _) => {
                if self.compare.is_none() {
                    return Err(config_error(
                        "compare needs a [compare] section with an intervention",
                    ));
                }
            }
            (e, None) => {
                return Err(config_error(format!("{} needs a [model] section", e.name())));
            }
            (_, Some(m)) => m.validate()?,
        }
        Ok(())
    }

    /// Canonical TOML text; parsing it gives back `self`.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn mesh(&self) -> Result<TimeMesh> {
        TimeMesh::new(self.horizon, self.mesh_step)
    }

    pub fn model(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| config_error("missing [model] section"))
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            damping: s.damping,
            contact: self.contact.clone(),
            linearized: s.linearized,
            panel_samples: s.panel_samples,
            panel_seed: self.seed,
            panel_mode: s.panel_mode,
            picard_tolerance: s.picard_tolerance,
            picard_max_iterations: s.picard_max_iterations,
            picard_start: s.picard_start,
        }
    }
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{s}` is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(config_error(format!("override `{s}` has an empty key")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Sets the dotted `key` to `value`, read as a TOML value when it parses
/// as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for p in path {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("`{p}` in `{key}` is not a table")))?;
    }
    node.insert(last.to_string(), parsed);
    Ok(())
}
