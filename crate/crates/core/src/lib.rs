//! Peer-aware cost estimation for two-player linear-quadratic differential
//! games with incomplete information.
//!
//! Each agent observes the shared state, infers its peer's state-cost
//! parameters online by replaying a short history through the coupled
//! Riccati machinery, and re-solves its own feedback policy against the
//! updated prediction of the peer's gain.
//!
//! * [`riccati`]: Lyapunov, Riccati and coupled Nash solvers plus sensitivities.
//! * [`lqgame`]: the game model, cost parameterizations and integration.
//! * [`pace`]: the learner (history stack, replay, gradients, belief and policy updates).
//! * [`simkit`]: closed-loop scenarios, metrics, Monte Carlo and step-size studies.

pub mod lqgame;
pub mod pace;
pub mod riccati;
pub mod simkit;

pub use lqgame::{Agent, CostParams, GameError, GameSpec, QParameterization};
pub use pace::{BeliefState, HistoryEntry, HistoryStack, Learner, LearnerConfig, LearnerMode, PaceError};
pub use riccati::{Matrix, RiccatiError, RiccatiSolution, SolverOptions, Vector};
pub use simkit::{RunResult, RunStatus, ScenarioSpec};
