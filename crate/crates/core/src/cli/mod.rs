//! Scenario-driven front end. Every experiment computes all its outputs in
//! memory, then writes them with a manifest, so a failed run leaves no
//! files behind.

mod compare;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use compare::{compare, default_compare_config, CompareReport, CompareSide};
pub use config::{
    apply_override, parse_assignment, CompareConfig, ConvergeConfig, Experiment,
    FluctuationsConfig, PdeConfig, PdeVariant, ScenarioConfig, SolverConfig,
};

use crate::abm::{replicate, replicate_map, seed_range, Dynamics, ModelSpec, SimOptions};
use crate::age_pde::{initial_density, solve_age_density, solve_sis_age_density};
use crate::analytics::{
    critical_population_size, early_phase_profile, growth_rate, markov_equilibria,
    sis_quasipotential,
};
use crate::error::{Error, Result};
use crate::fclt::{driver_covariances, sample_fluctuations, FcltOptions};
use crate::laws::{DurationLaw, InfectivityLaw, JointLaw};
use crate::mesh::sup_distance;
use crate::output::{read_table, write_rows};
use crate::volterra::{solve, solve_vivs_fixed_point};

#[derive(Debug, Parser)]
#[command(name = "epilimit", version, about = "Epidemic models and their large-population limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replicated individual-based simulation.
    Simulate(RunArgs),
    /// Deterministic limit of the model.
    Solve(RunArgs),
    /// Distance between simulations and the limit as N grows.
    Converge(RunArgs),
    /// Gaussian driver covariances and sampled fluctuation paths.
    Fluctuations(RunArgs),
    /// Infection-age density.
    Pde(RunArgs),
    /// Growth rate, reproduction number, equilibria.
    Analytics(RunArgs),
    /// Varying-susceptibility fixed point.
    Vivs(RunArgs),
    /// Markov vs non-Markov response to a contact drop.
    Compare(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "mesh-step")]
    mesh_step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Override any config key, e.g. `--set model.population=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Simulate(a) => (Experiment::Simulate, a),
            Command::Solve(a) => (Experiment::Solve, a),
            Command::Converge(a) => (Experiment::Converge, a),
            Command::Fluctuations(a) => (Experiment::Fluctuations, a),
            Command::Pde(a) => (Experiment::Pde, a),
            Command::Analytics(a) => (Experiment::Analytics, a),
            Command::Vivs(a) => (Experiment::Vivs, a),
            Command::Compare(a) => (Experiment::Compare, a),
        }
    }
}

/// Parses `args` (program name first), runs the experiment and returns the
/// process exit code: 0 on success, 2 on invalid input, 3 on numerical
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (experiment, args) = cli.command.split();
    match run_experiment(experiment, &args) {
        Ok(summary) => {
            // a closed stdout (e.g. `| head`) is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn run_experiment(experiment: Experiment, args: &RunArgs) -> Result<String> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let mut overrides = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(("seed".to_string(), s.to_string()));
    }
    if let Some(h) = args.mesh_step {
        overrides.push(("mesh_step".to_string(), format!("{h:?}")));
    }
    if let Some(r) = args.replicates {
        overrides.push(("replicates".to_string(), r.to_string()));
    }
    if let Some(o) = &args.out {
        let quoted = toml::Value::String(o.display().to_string()).to_string();
        overrides.push(("output".to_string(), quoted));
    }
    for s in &args.set {
        overrides.push(parse_assignment(s)?);
    }
    let cfg = ScenarioConfig::parse_for(&text, experiment, &overrides)?;
    let report = execute(&cfg)?;
    let dir = PathBuf::from(&cfg.output);
    report.write(&dir)?;
    Ok(format!(
        "{}: wrote {} files to {} (config_digest {})\n{}",
        experiment.name(),
        report.files.len() + 2,
        dir.display(),
        report.digest,
        serde_json::to_string_pretty(&report.summary).expect("summary serializes")
    ))
}

/// Outputs of one experiment, held in memory until written.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub experiment: Experiment,
    pub digest: String,
    pub canonical: String,
    /// File name and contents.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

impl RunReport {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    pub fn manifest(&self) -> Value {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(n, b)| json!({ "name": n, "sha256": hex::encode(Sha256::digest(b)) }))
            .collect();
        json!({
            "experiment": self.experiment.name(),
            "config_digest": self.digest,
            "version": env!("CARGO_PKG_VERSION"),
            "files": files,
            "summary": self.summary,
        })
    }

    /// Writes the files, the canonical scenario and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        fs::write(dir.join("scenario.toml"), &self.canonical)?;
        let manifest = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), manifest + "\n")?;
        Ok(())
    }
}

/// Checks an output directory: the scenario hashes to the manifest digest
/// and every CSV header carries that digest.
pub fn verify_outputs(dir: &Path) -> Result<()> {
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
        .map_err(|e| Error::Config(format!("manifest: {e}")))?;
    let digest = manifest["config_digest"]
        .as_str()
        .ok_or_else(|| Error::Config("manifest has no config_digest".into()))?;
    let scenario = fs::read_to_string(dir.join("scenario.toml"))?;
    let actual = hex::encode(Sha256::digest(scenario.as_bytes()));
    if actual != digest {
        return Err(Error::Config(format!(
            "scenario.toml hashes to {actual}, manifest says {digest}"
        )));
    }
    for f in manifest["files"].as_array().into_iter().flatten() {
        let name = f["name"].as_str().unwrap_or_default();
        let bytes = fs::read(dir.join(name))?;
        if f["sha256"].as_str() != Some(hex::encode(Sha256::digest(&bytes)).as_str()) {
            return Err(Error::Config(format!("{name} does not match its manifest hash")));
        }
        if name.ends_with(".csv") {
            let (header, _, _) = read_table(&String::from_utf8_lossy(&bytes));
            if header.as_deref() != Some(digest) {
                return Err(Error::Config(format!("{name} carries a different digest")));
            }
        }
    }
    Ok(())
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs the experiment of `cfg` without touching the file system.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let digest = cfg.digest();
    let d = digest.as_str();
    let mesh = cfg.mesh()?;
    let opts = cfg.solve_options();
    let mut files = Vec::new();
    let summary = match cfg.experiment {
        Experiment::Simulate => {
            let model = cfg.model()?;
            let seeds = seed_range(cfg.seed, cfg.replicates);
            let ens = replicate(model, &mesh, &seeds, &SimOptions::default())?;
            let first = crate::abm::simulate(model, &mesh, cfg.seed, &SimOptions::default())?;
            files.push(("ensemble.csv".into(), csv(|b| ens.write_csv(b, d))?));
            files.push(("trajectory.csv".into(), csv(|b| first.write_csv(b, d))?));
            json!({
                "family": ens.family,
                "population": ens.population,
                "replicates": ens.seeds.len(),
                "extinct_runs": ens.extinct_runs,
                "first_run": first.manifest(d),
            })
        }
        Experiment::Solve => {
            let sol = solve(cfg.model()?, &mesh, &opts)?;
            files.push(("solution.csv".into(), csv(|b| sol.write_csv(b, d))?));
            json!({
                "family": sol.family,
                "iterations": sol.iterations,
                "final": final_values(&sol.columns),
            })
        }
        Experiment::Converge => converge(cfg, &mut files)?,
        Experiment::Fluctuations => {
            let model = cfg.model()?;
            let fc = cfg.fluctuations.clone().unwrap_or_default();
            let limit = solve(model, &mesh, &opts)?;
            let fopts = FcltOptions {
                panel_size: fc.panel_size,
                panel_seed: cfg.seed,
                max_dimension: fc.max_dimension,
            };
            let spec = driver_covariances(model, &limit, &fopts)?;
            let ens = sample_fluctuations(&spec, fc.paths, cfg.seed)?;
            files.push(("limit.csv".into(), csv(|b| limit.write_csv(b, d))?));
            files.push(("drivers.csv".into(), csv(|b| spec.write_variances(b, d))?));
            files.push(("fluctuations.csv".into(), csv(|b| ens.write_csv(b, d))?));
            json!({
                "family": model.dynamics.name(),
                "drivers": spec.names(),
                "min_eigenvalue": spec.min_eigenvalue(),
                "paths": ens.count(),
            })
        }
        Experiment::Pde => {
            let model = cfg.model()?;
            let pc = cfg.pde.clone().unwrap_or_default();
            let law = infectivity_of(&model.dynamics).ok_or_else(|| {
                Error::Config(format!("pde does not support {}", model.dynamics.name()))
            })?;
            let age = model.initial.age.as_ref().ok_or_else(|| {
                Error::Config("pde needs model.initial.age for the initial density".into())
            })?;
            let init = initial_density(model.initial.infected, age, mesh.step())?;
            let field = match pc.variant {
                PdeVariant::Sir => {
                    solve_age_density(&law, &init, model.initial.susceptible, &mesh, &opts)?
                }
                PdeVariant::Sis => solve_sis_age_density(&law, &init, &mesh, &opts)?,
            };
            files.push((
                "pde_field.csv".into(),
                csv(|b| field.write_long_csv(b, d, pc.stride))?,
            ));
            files.push(("pde_boundary.csv".into(), csv(|b| field.write_boundary_csv(b, d))?));
            let last = field.times.len() - 1;
            json!({
                "variant": pc.variant,
                "final_infected": field.total(last),
                "final_susceptible": field.susceptible[last],
                "clamped_at": field.clamped_at,
            })
        }
        Experiment::Analytics => {
            let summary = analytics_summary(cfg)?;
            files.push((
                "analytics.json".into(),
                serde_json::to_vec_pretty(&summary).expect("summary serializes"),
            ));
            summary
        }
        Experiment::Vivs => {
            let sol = solve_vivs_fixed_point(cfg.model()?, &mesh, &opts)?;
            files.push(("vivs.csv".into(), csv(|b| sol.write_csv(b, d))?));
            json!({
                "iterations": sol.iterations,
                "final": final_values(&sol.columns),
            })
        }
        Experiment::Compare => {
            let cc = cfg
                .compare
                .as_ref()
                .ok_or_else(|| Error::Config("compare needs a [compare] section".into()))?;
            let report = compare(cc, &mesh, &opts)?;
            let (m, nm) = (&report.markov.solution, &report.nonmarkov.solution);
            let rows = (0..report.times.len()).map(|k| {
                vec![
                    report.times[k],
                    m.cumulative()[k],
                    nm.cumulative()[k],
                    report.gap[k],
                    m.i()[k],
                    nm.i()[k],
                ]
            });
            let header = ["t", "A_markov", "A_nonmarkov", "gap", "I_markov", "I_nonmarkov"];
            files.push(("compare.csv".into(), csv(|b| write_rows(b, d, &header, rows))?));
            json!({
                "markov": { "law": report.markov.law, "r0": report.markov.r0,
                            "contact_factor": report.markov.contact_factor },
                "nonmarkov": { "law": report.nonmarkov.law, "r0": report.nonmarkov.r0,
                               "contact_factor": report.nonmarkov.contact_factor },
                "final_gap": report.final_gap(),
                "gap_positive_from": report.positive_from(),
                "nonmarkov_exceeds_at_horizon": report.final_gap() > 0.0,
            })
        }
    };
    Ok(RunReport {
        experiment: cfg.experiment,
        digest,
        canonical: cfg.canonical(),
        files,
        summary,
    })
}

fn final_values(columns: &[(String, Vec<f64>)]) -> Value {
    let map: serde_json::Map<String, Value> = columns
        .iter()
        .filter_map(|(n, v)| v.last().map(|x| (n.clone(), json!(x))))
        .collect();
    Value::Object(map)
}

/// Mean over replicates of the sup-norm distance between `I^N` and the limit.
fn converge(cfg: &ScenarioConfig, files: &mut Vec<(String, Vec<u8>)>) -> Result<Value> {
    let model = cfg.model()?;
    let mesh = cfg.mesh()?;
    let populations = cfg.converge.clone().unwrap_or_default().populations;
    if populations.is_empty() {
        return Err(Error::Config("converge needs at least one population".into()));
    }
    let limit = solve(model, &mesh, &cfg.solve_options())?;
    let reference = limit.i().to_vec();
    let seeds = seed_range(cfg.seed, cfg.replicates);
    let mut rows = Vec::new();
    for &n in &populations {
        let m = ModelSpec {
            population: n,
            ..model.clone()
        };
        let errors = replicate_map(&m, &mesh, &seeds, &SimOptions::default(), |t| {
            let i = t.fraction(crate::abm::Compartment::I);
            sup_distance(&i, &reference)
        })?;
        let k = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / k;
        let var = if errors.len() > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        rows.push(vec![n as f64, mean, (var / k).sqrt()]);
    }
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[0][1] / w[1][1]).collect();
    let within = ratios.iter().all(|r| (2.2..=4.5).contains(r));
    let header = ["population", "mean_sup_error", "std_error"];
    let d = cfg.digest();
    files.push((
        "converge.csv".into(),
        csv(|b| write_rows(b, &d, &header, rows.clone()))?,
    ));
    Ok(json!({
        "family": model.dynamics.name(),
        "populations": populations,
        "mean_sup_error": rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
        "ratios": ratios,
        "ratios_within_2.2_4.5": within,
    }))
}

/// Infectivity law of one infected individual, when the family has one.
pub fn infectivity_of(d: &Dynamics) -> Option<InfectivityLaw> {
    match d {
        Dynamics::MarkovSir {
            infection_rate,
            recovery_rate,
        }
        | Dynamics::MarkovSis {
            infection_rate,
            recovery_rate,
        }
        | Dynamics::MarkovSirs {
            infection_rate,
            recovery_rate,
            ..
        } => Some(InfectivityLaw::constant(
            *infection_rate,
            DurationLaw::exponential(*recovery_rate),
        )),
        Dynamics::MarkovSirDemography {
            infection_rate,
            recovery_rate,
            birth_death_rate,
        } => Some(InfectivityLaw::constant(
            *infection_rate,
            DurationLaw::exponential(recovery_rate + birth_death_rate),
        )),
        Dynamics::NonmarkovSir {
            infection_rate,
            infectious_period,
            ..
        } => Some(InfectivityLaw::constant(
            *infection_rate,
            infectious_period.clone(),
        )),
        Dynamics::NonmarkovSeir {
            infection_rate,
            periods: JointLaw::Independent {
                latency,
                infectious,
            },
            ..
        } => Some(InfectivityLaw::Latent {
            rate: *infection_rate,
            latency: latency.clone(),
            period: infectious.clone(),
        }),
        Dynamics::VaryingInfectivity { infectivity, .. }
        | Dynamics::VaryingSusceptibility { infectivity, .. } => Some(infectivity.clone()),
        _ => None,
    }
}

fn analytics_summary(cfg: &ScenarioConfig) -> Result<Value> {
    let model = cfg.model()?;
    let d = &model.dynamics;
    let law = infectivity_of(d)
        .ok_or_else(|| Error::Config(format!("analytics does not support {}", d.name())))?;
    let r0 = law.r0();
    let rho = growth_rate(&law)?;
    let doubling = (rho > 0.0).then(|| std::f64::consts::LN_2 / rho);
    let early = if rho != 0.0 {
        let p = early_phase_profile(&law, rho, cfg.mesh_step, 1)?;
        json!({ "infected_share": p.i, "recovered_share": p.r })
    } else {
        Value::Null
    };
    let equilibrium = markov_equilibria(d).ok();
    let critical = match d {
        Dynamics::MarkovSirDemography {
            infection_rate,
            recovery_rate,
            birth_death_rate,
        } => {
            let r0 = infection_rate / (recovery_rate + birth_death_rate);
            critical_population_size(r0, *recovery_rate, *birth_death_rate).ok()
        }
        _ => None,
    };
    let quasipotential = match d {
        Dynamics::MarkovSis { .. } => sis_quasipotential(r0).ok(),
        _ => None,
    };
    Ok(json!({
        "family": d.name(),
        "r0": r0,
        "growth_rate": rho,
        "doubling_time": doubling,
        "early_phase": early,
        "equilibrium": equilibrium,
        "critical_population_size": critical,
        "sis_quasipotential": quasipotential,
    }))
}
