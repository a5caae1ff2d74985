//! Toolkit for inhomogeneous semi-Markov processes.
//!
//! A process is described by transition intensity fields q_ij(t, u) that may
//! depend on both calendar time t and the duration u spent in the current
//! state. The crate builds such models ([`model`]), integrates their hazards
//! exactly along duration characteristics ([`hazard`]), samples paths by
//! hazard inversion ([`simulate`]), estimates transition functionals by
//! Monte Carlo ([`monte_carlo`]), propagates the joint state–duration law on
//! a duration grid ([`solver`]), and cross-verifies the two routes against
//! the structural identities the processes must satisfy ([`checks`]).

pub mod checks;
pub mod config;
pub mod hazard;
pub mod model;
pub mod monte_carlo;
pub mod quad;
pub mod runner;
pub mod simulate;
pub mod solver;
pub mod stats;

pub use hazard::{HazardError, HazardKernel, NextJump};
pub use model::{Factor, IntensityField, IntensityModel, ModelError, StateSpace};
pub use quad::{QuadError, QuadratureConfig};
pub use simulate::{SimulationError, Trajectory};
pub use solver::{RowSequence, SolverError};

use serde::{Deserialize, Serialize};

/// A conditioning point for transition queries: the process is in `state` at
/// calendar time `time`, having already spent `duration` there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartState {
    pub state: usize,
    pub time: f64,
    pub duration: f64,
}

impl StartState {
    /// Start in `state` at time `time` with a freshly reset duration clock.
    pub fn fresh(state: usize, time: f64) -> Self {
        StartState {
            state,
            time,
            duration: 0.0,
        }
    }
}

/// Crate-wide error: any failure from model building, hazard evaluation,
/// simulation, solving, verification, or experiment configuration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Hazard(#[from] hazard::HazardError),
    #[error(transparent)]
    Simulation(#[from] simulate::SimulationError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Check(#[from] checks::CheckError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
