use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::laws::{DurationLaw, InfectivityLaw, JointLaw, SusceptibilityLaw};

/// Initial fractions of the population in each compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub susceptible: f64,
    #[serde(default)]
    pub exposed: f64,
    pub infected: f64,
    #[serde(default)]
    pub recovered: f64,
    /// Law of the time since infection of the initially infected. When set,
    /// their remaining periods are drawn conditionally on that age.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<DurationLaw>,
}

impl InitialCondition {
    pub fn sir(infected: f64) -> Self {
        InitialCondition {
            susceptible: 1.0 - infected,
            exposed: 0.0,
            infected,
            recovered: 0.0,
            age: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.susceptible, self.exposed, self.infected, self.recovered];
        if parts.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
            return Err(invalid("initial fractions must lie in [0, 1]"));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("initial fractions sum to {total}, not 1")));
        }
        if let Some(a) = &self.age {
            a.validate()?;
        }
        Ok(())
    }

    /// Integer counts `[S, E, I, R]` summing to `n`; rounding residue goes
    /// to the susceptibles.
    pub fn counts(&self, n: usize) -> [usize; 4] {
        let e = (self.exposed * n as f64).round() as usize;
        let i = (self.infected * n as f64).round() as usize;
        let r = (self.recovered * n as f64).round() as usize;
        let s = n.saturating_sub(e + i + r);
        [s, e, i, r]
    }
}

/// Migration rates between patches; entry `[i][j]` is the per-capita rate
/// from patch `i` to patch `j` (the diagonal is ignored).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Migration {
    #[serde(default)]
    pub susceptible: Vec<Vec<f64>>,
    #[serde(default)]
    pub infected: Vec<Vec<f64>>,
    #[serde(default)]
    pub recovered: Vec<Vec<f64>>,
}

/// One patch: its infection rate and initial fractions of the total
/// population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patch {
    pub infection_rate: f64,
    pub susceptible: f64,
    pub infected: f64,
    #[serde(default)]
    pub recovered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipatchSpec {
    pub patches: Vec<Patch>,
    /// Contact matrix `kappa[i][j]` in [0, 1] with unit diagonal.
    pub contact: Vec<Vec<f64>>,
    /// Exponent in the normalisation `N^(1-g) * N_i^g`, in [0, 1].
    pub normalization: f64,
    pub infectious_period: DurationLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_period: Option<DurationLaw>,
    #[serde(default)]
    pub migration: Migration,
}

impl MultipatchSpec {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    fn matrix_ok(m: &[Vec<f64>], l: usize, name: &str) -> Result<()> {
        if m.is_empty() {
            return Ok(());
        }
        if m.len() != l || m.iter().any(|r| r.len() != l) {
            return Err(invalid(format!("{name} must be a {l}x{l} matrix")));
        }
        if m.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("{name} entries must be nonnegative")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.len();
        if l == 0 {
            return Err(invalid("multipatch model needs at least one patch"));
        }
        Self::matrix_ok(&self.contact, l, "contact")?;
        if self.contact.is_empty() {
            return Err(invalid("contact matrix is required"));
        }
        for (i, row) in self.contact.iter().enumerate() {
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(invalid("contact matrix must have unit diagonal"));
            }
            if row.iter().any(|v| *v > 1.0) {
                return Err(invalid("contact entries must lie in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.normalization) {
            return Err(invalid("normalization exponent must lie in [0, 1]"));
        }
        Self::matrix_ok(&self.migration.susceptible, l, "susceptible migration")?;
        Self::matrix_ok(&self.migration.infected, l, "infected migration")?;
        Self::matrix_ok(&self.migration.recovered, l, "recovered migration")?;
        self.infectious_period.validate()?;
        if let Some(f) = &self.initial_period {
            f.validate()?;
        }
        let mut total = 0.0;
        for p in &self.patches {
            if !(p.infection_rate >= 0.0) {
                return Err(invalid("patch infection rates must be nonnegative"));
            }
            for v in [p.susceptible, p.infected, p.recovered] {
                if !(v >= 0.0) {
                    return Err(invalid("patch fractions must be nonnegative"));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("patch fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Rate matrix entry, zero when the matrix is absent.
    pub fn rate(m: &[Vec<f64>], i: usize, j: usize) -> f64 {
        if m.is_empty() || i == j {
            0.0
        } else {
            m[i][j]
        }
    }

    pub fn out_rate(m: &[Vec<f64>], i: usize) -> f64 {
        (0..m.len()).map(|j| Self::rate(m, i, j)).sum()
    }
}

/// Model family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Dynamics {
    MarkovSir {
        infection_rate: f64,
        recovery_rate: f64,
    },
    MarkovSis {
        infection_rate: f64,
        recovery_rate: f64,
    },
    MarkovSirs {
        infection_rate: f64,
        recovery_rate: f64,
        immunity_loss_rate: f64,
    },
    MarkovSirDemography {
        infection_rate: f64,
        recovery_rate: f64,
        birth_death_rate: f64,
    },
    NonmarkovSir {
        infection_rate: f64,
        infectious_period: DurationLaw,
        /// Remaining infectious period of the initially infected
        /// (defaults to `infectious_period`).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_period: Option<DurationLaw>,
    },
    NonmarkovSeir {
        infection_rate: f64,
        periods: JointLaw,
        /// Remaining exposed period of the initially exposed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_latency: Option<DurationLaw>,
        /// Remaining infectious period of the initially infectious.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_period: Option<DurationLaw>,
    },
    VaryingInfectivity {
        infectivity: InfectivityLaw,
        /// Law of the infectivity of the initially infected (defaults to
        /// `infectivity`, i.e. infected at time 0).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_infectivity: Option<InfectivityLaw>,
    },
    VaryingSusceptibility {
        infectivity: InfectivityLaw,
        susceptibility: SusceptibilityLaw,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_infectivity: Option<InfectivityLaw>,
        /// Time since recovery of the initially recovered.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        since_recovery: Option<DurationLaw>,
    },
    Multipatch(MultipatchSpec),
}

impl Dynamics {
    pub fn name(&self) -> &'static str {
        match self {
            Dynamics::MarkovSir { .. } => "markov-sir",
            Dynamics::MarkovSis { .. } => "markov-sis",
            Dynamics::MarkovSirs { .. } => "markov-sirs",
            Dynamics::MarkovSirDemography { .. } => "markov-sir-demography",
            Dynamics::NonmarkovSir { .. } => "nonmarkov-sir",
            Dynamics::NonmarkovSeir { .. } => "nonmarkov-seir",
            Dynamics::VaryingInfectivity { .. } => "varying-infectivity",
            Dynamics::VaryingSusceptibility { .. } => "varying-susceptibility",
            Dynamics::Multipatch(_) => "multipatch",
        }
    }

    pub fn is_fixed_population(&self) -> bool {
        !matches!(self, Dynamics::MarkovSirDemography { .. })
    }
}

/// A complete individual-based model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub population: usize,
    pub dynamics: Dynamics,
    /// Ignored by the multipatch family, whose patches carry their own
    /// initial fractions.
    pub initial: InitialCondition,
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

impl ModelSpec {
    pub fn new(population: usize, dynamics: Dynamics, initial: InitialCondition) -> Self {
        ModelSpec {
            population,
            dynamics,
            initial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(invalid("population must be positive"));
        }
        self.initial.validate()?;
        match &self.dynamics {
            Dynamics::MarkovSir {
                infection_rate,
                recovery_rate,
            }
            | Dynamics::MarkovSis {
                infection_rate,
                recovery_rate,
            } => {
                check_rate("infection_rate", *infection_rate)?;
                check_rate("recovery_rate", *recovery_rate)?;
                if *recovery_rate == 0.0 {
                    return Err(invalid("recovery_rate must be positive"));
                }
            }
            Dynamics::MarkovSirs {
                infection_rate,
                recovery_rate,
                immunity_loss_rate,
            } => {
                check_rate("infection_rate", *infection_rate)?;
                check_rate("recovery_rate", *recovery_rate)?;
                check_rate("immunity_loss_rate", *immunity_loss_rate)?;
                if *recovery_rate == 0.0 {
                    return Err(invalid("recovery_rate must be positive"));
                }
            }
            Dynamics::MarkovSirDemography {
                infection_rate,
                recovery_rate,
                birth_death_rate,
            } => {
                check_rate("infection_rate", *infection_rate)?;
                check_rate("recovery_rate", *recovery_rate)?;
                check_rate("birth_death_rate", *birth_death_rate)?;
                if *recovery_rate == 0.0 {
                    return Err(invalid("recovery_rate must be positive"));
                }
            }
            Dynamics::NonmarkovSir {
                infection_rate,
                infectious_period,
                initial_period,
            } => {
                check_rate("infection_rate", *infection_rate)?;
                infectious_period.validate()?;
                if let Some(f) = initial_period {
                    f.validate()?;
                }
            }
            Dynamics::NonmarkovSeir {
                infection_rate,
                periods,
                initial_latency,
                initial_period,
            } => {
                check_rate("infection_rate", *infection_rate)?;
                periods.validate()?;
                for f in [initial_latency, initial_period].into_iter().flatten() {
                    f.validate()?;
                }
            }
            Dynamics::VaryingInfectivity {
                infectivity,
                initial_infectivity,
            } => {
                infectivity.validate()?;
                if let Some(l) = initial_infectivity {
                    l.validate()?;
                }
            }
            Dynamics::VaryingSusceptibility {
                infectivity,
                susceptibility,
                initial_infectivity,
                since_recovery,
            } => {
                infectivity.validate()?;
                susceptibility.validate()?;
                if let Some(l) = initial_infectivity {
                    l.validate()?;
                }
                if let Some(l) = since_recovery {
                    l.validate()?;
                }
            }
            Dynamics::Multipatch(m) => m.validate()?,
        }
        if self.initial.exposed > 0.0 && !matches!(self.dynamics, Dynamics::NonmarkovSeir { .. }) {
            return Err(invalid(format!(
                "family {} has no exposed compartment",
                self.dynamics.name()
            )));
        }
        Ok(())
    }
}
