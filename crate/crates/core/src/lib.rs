//! Stochastic individual-based epidemic models and their large-population
//! limits.
//!
//! The crate simulates finite-population epidemic models (Markov and
//! non-Markov SIR/SEIR/SIS/SIRS, varying infectivity and susceptibility,
//! multipatch) exactly by thinning of Poisson random measures, solves their
//! deterministic limits (ODEs, Volterra integral equations, age-structured
//! densities), samples their Gaussian fluctuation limits, and computes the
//! analytic quantities derived from them (growth rates, equilibria, critical
//! population sizes).

pub mod abm;
pub mod age_pde;
pub mod analytics;
pub mod cli;
pub mod error;
pub mod fclt;
pub mod laws;
pub mod mesh;
pub mod output;
pub mod quadrature;
pub mod rng;
pub mod volterra;

pub use error::{Error, Result};
pub use mesh::{Curve, TimeMesh};
