//! Two-agent closed-loop simulation, the reference scenarios, estimation
//! metrics, and Monte Carlo / step-size studies built on them.

mod engine;
mod metrics;
mod scenario;
mod study;

use thiserror::Error;

use crate::lqgame::GameError;
use crate::pace::PaceError;

pub use engine::{run_closed_loop, EstimateTrace, RunEvent, RunResult, RunStatus};
pub use metrics::{compute_metrics, percent_error_series, time_below, ParameterMetrics, CONVERGED_PCT};
pub use scenario::{
    build_scenario, phri_matrices, ramp_reference, scalar_toy, toggling_reference, InitialBeliefs, ReferenceJump, ScenarioName,
    ScenarioOverrides, ScenarioSpec, VehicleParams, PHRI_INITIAL_ESTIMATES, STEERING_INITIAL_ESTIMATES,
};
pub use study::*;

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("infeasible initialization: {0}")]
    InfeasibleInitialization(String),
    #[error("true value of {0} is zero; percent error undefined")]
    ZeroTrueParameter(String),
    #[error("internal simulation error: {0}")]
    Internal(String),
}

impl From<GameError> for SimError {
    fn from(e: GameError) -> Self {
        SimError::InvalidScenario(e.to_string())
    }
}

impl From<PaceError> for SimError {
    fn from(e: PaceError) -> Self {
        SimError::InvalidScenario(e.to_string())
    }
}
