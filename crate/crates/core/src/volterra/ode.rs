//! RK4 integration of the Markov limits.

use serde::{Deserialize, Serialize};

use super::{ContactSchedule, LimitSolution};
use crate::abm::{Dynamics, InitialCondition};
use crate::error::{invalid, Error, Result};
use crate::mesh::TimeMesh;

/// Right-hand sides of the mean-field ODEs. `infection_rate` is scaled by
/// the contact schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OdeSystem {
    Sir {
        infection_rate: f64,
        recovery_rate: f64,
    },
    Sis {
        infection_rate: f64,
        recovery_rate: f64,
    },
    Sirs {
        infection_rate: f64,
        recovery_rate: f64,
        immunity_loss_rate: f64,
    },
    SirDemography {
        infection_rate: f64,
        recovery_rate: f64,
        birth_death_rate: f64,
    },
    Seir {
        infection_rate: f64,
        latency_rate: f64,
        recovery_rate: f64,
    },
}

impl OdeSystem {
    pub fn from_dynamics(d: &Dynamics) -> Result<Self> {
        Ok(match *d {
            Dynamics::MarkovSir {
                infection_rate,
                recovery_rate,
            } => OdeSystem::Sir {
                infection_rate,
                recovery_rate,
            },
            Dynamics::MarkovSis {
                infection_rate,
                recovery_rate,
            } => OdeSystem::Sis {
                infection_rate,
                recovery_rate,
            },
            Dynamics::MarkovSirs {
                infection_rate,
                recovery_rate,
                immunity_loss_rate,
            } => OdeSystem::Sirs {
                infection_rate,
                recovery_rate,
                immunity_loss_rate,
            },
            Dynamics::MarkovSirDemography {
                infection_rate,
                recovery_rate,
                birth_death_rate,
            } => OdeSystem::SirDemography {
                infection_rate,
                recovery_rate,
                birth_death_rate,
            },
            _ => {
                return Err(invalid(format!(
                    "{} has no ODE limit; use the integral solver",
                    d.name()
                )))
            }
        })
    }

    fn name(&self) -> &'static str {
        match self {
            OdeSystem::Sir { .. } => "markov-sir",
            OdeSystem::Sis { .. } => "markov-sis",
            OdeSystem::Sirs { .. } => "markov-sirs",
            OdeSystem::SirDemography { .. } => "markov-sir-demography",
            OdeSystem::Seir { .. } => "markov-seir",
        }
    }

    fn rates(&self) -> Vec<f64> {
        match *self {
            OdeSystem::Sir {
                infection_rate,
                recovery_rate,
            }
            | OdeSystem::Sis {
                infection_rate,
                recovery_rate,
            } => vec![infection_rate, recovery_rate],
            OdeSystem::Sirs {
                infection_rate,
                recovery_rate,
                immunity_loss_rate,
            } => vec![infection_rate, recovery_rate, immunity_loss_rate],
            OdeSystem::SirDemography {
                infection_rate,
                recovery_rate,
                birth_death_rate,
            } => vec![infection_rate, recovery_rate, birth_death_rate],
            OdeSystem::Seir {
                infection_rate,
                latency_rate,
                recovery_rate,
            } => vec![infection_rate, latency_rate, recovery_rate],
        }
    }

    /// Derivative of `[S, E, I, R, A]` with contact factor `c`.
    fn rhs(&self, x: &[f64; 5], c: f64) -> [f64; 5] {
        let [s, e, i, r, _] = *x;
        match *self {
            OdeSystem::Sir {
                infection_rate: l,
                recovery_rate: g,
            } => {
                let inf = c * l * s * i;
                [-inf, 0.0, inf - g * i, g * i, inf]
            }
            OdeSystem::Sis {
                infection_rate: l,
                recovery_rate: g,
            } => {
                let inf = c * l * s * i;
                [-inf + g * i, 0.0, inf - g * i, 0.0, inf]
            }
            OdeSystem::Sirs {
                infection_rate: l,
                recovery_rate: g,
                immunity_loss_rate: rho,
            } => {
                let inf = c * l * s * i;
                [-inf + rho * r, 0.0, inf - g * i, g * i - rho * r, inf]
            }
            OdeSystem::SirDemography {
                infection_rate: l,
                recovery_rate: g,
                birth_death_rate: mu,
            } => {
                let inf = c * l * s * i;
                [
                    mu - inf - mu * s,
                    0.0,
                    inf - (g + mu) * i,
                    g * i - mu * r,
                    inf,
                ]
            }
            OdeSystem::Seir {
                infection_rate: l,
                latency_rate: nu,
                recovery_rate: g,
            } => {
                let inf = c * l * s * i;
                [-inf, inf - nu * e, nu * e - g * i, g * i, inf]
            }
        }
    }
}

const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// Classical RK4 on the mesh. The contact factor is read at each stage
/// time, so changes should sit on mesh nodes.
pub fn solve_ode(
    system: &OdeSystem,
    init: &InitialCondition,
    mesh: &TimeMesh,
    contact: Option<&ContactSchedule>,
) -> Result<LimitSolution> {
    init.validate()?;
    if system.rates().iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(invalid("ODE rates must be nonnegative and finite"));
    }
    if let Some(c) = contact {
        c.validate()?;
    }
    if init.exposed > 0.0 && !matches!(system, OdeSystem::Seir { .. }) {
        return Err(invalid("only the SEIR system has an exposed compartment"));
    }
    let h = mesh.step();
    let c = |t: f64| contact.map_or(1.0, |s| s.factor(t));
    let mut x = [init.susceptible, init.exposed, init.infected, init.recovered, 0.0];
    let mut out: Vec<[f64; 5]> = Vec::with_capacity(mesh.nodes());
    out.push(x);
    for k in 0..mesh.intervals() {
        let t = mesh.time(k);
        let add = |a: &[f64; 5], b: &[f64; 5], w: f64| {
            let mut y = *a;
            for j in 0..5 {
                y[j] += w * b[j];
            }
            y
        };
        let k1 = system.rhs(&x, c(t));
        let k2 = system.rhs(&add(&x, &k1, h / 2.0), c(t + h / 2.0));
        let k3 = system.rhs(&add(&x, &k2, h / 2.0), c(t + h / 2.0));
        let k4 = system.rhs(&add(&x, &k3, h), c(t + h));
        for j in 0..5 {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        for (j, name) in ["S", "E", "I", "R"].iter().enumerate() {
            if x[j] < -NEGATIVE_TOLERANCE {
                return Err(Error::NegativeState {
                    component: name,
                    time: t + h,
                    value: x[j],
                });
            }
        }
        out.push(x);
    }
    let col = |j: usize| out.iter().map(|x| x[j]).collect::<Vec<_>>();
    let force: Vec<f64> = match *system {
        OdeSystem::Sir { infection_rate, .. }
        | OdeSystem::Sis { infection_rate, .. }
        | OdeSystem::Sirs { infection_rate, .. }
        | OdeSystem::SirDemography { infection_rate, .. }
        | OdeSystem::Seir { infection_rate, .. } => out
            .iter()
            .enumerate()
            .map(|(k, x)| infection_rate * c(mesh.time(k)) * x[2])
            .collect(),
    };
    Ok(LimitSolution::new(
        system.name(),
        mesh,
        [col(0), col(1), col(2), col(3), force, col(4)],
    ))
}
