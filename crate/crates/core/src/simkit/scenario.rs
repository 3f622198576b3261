use std::fmt;
use std::str::FromStr;

use crate::lqgame::{CostParams, GameSpec, QParameterization};
use crate::pace::{LearnerConfig, LearnerMode};
use crate::riccati::{Matrix, Vector};

use super::SimError;

/// Instantaneous error-state jump applied at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceJump {
    pub time: f64,
    pub offset: Vector,
}

/// Initial estimates held by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBeliefs {
    pub theta_peer: CostParams,
    pub theta_self: CostParams,
}

impl InitialBeliefs {
    /// Beliefs for both agents built from one shared pair of initial
    /// estimates `(θ̂_i, θ̂_j)`, so that the two agents start in agreement.
    pub fn shared(theta_i: &CostParams, theta_j: &CostParams) -> (Self, Self) {
        (
            Self {
                theta_peer: theta_j.clone(),
                theta_self: theta_i.clone(),
            },
            Self {
                theta_peer: theta_i.clone(),
                theta_self: theta_j.clone(),
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub game: GameSpec,
    pub x0: Vector,
    /// Sampling and decision interval in seconds.
    pub dt: f64,
    pub duration: f64,
    pub reference_schedule: Vec<ReferenceJump>,
    pub learner_i: LearnerConfig,
    pub learner_j: LearnerConfig,
    pub init_i: InitialBeliefs,
    pub init_j: InitialBeliefs,
    /// State norm above which a run is declared diverged.
    pub divergence_threshold: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.game.state_dim();
        if self.x0.len() != n {
            return Err(SimError::InvalidScenario(format!("x0 has {} entries, expected {n}", self.x0.len())));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidScenario(format!("dt = {}", self.dt)));
        }
        if !(self.duration >= self.dt) {
            return Err(SimError::InvalidScenario(format!("duration = {}", self.duration)));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(SimError::InvalidScenario("divergence threshold must be positive".into()));
        }
        if self.reference_schedule.iter().any(|j| j.offset.len() != n) {
            return Err(SimError::InvalidScenario("reference offset dimension".into()));
        }
        for cfg in [&self.learner_i, &self.learner_j] {
            cfg.validate().map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        }
        Ok(())
    }

    /// Number of integration intervals; epochs run at `k·dt` for `k = 0..=steps`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Sets the learning rate of both agents.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.learner_i.alpha = alpha;
        self.learner_j.alpha = alpha;
        self
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.learner_i.capacity = capacity;
        self.learner_j.capacity = capacity;
        self
    }

    pub fn with_mode(mut self, mode: LearnerMode) -> Self {
        self.learner_i.mode = mode;
        self.learner_j.mode = mode;
        self
    }

    /// Shared initial estimates `(θ̂_i, θ̂_j)` for both agents.
    pub fn with_initial_estimates(mut self, theta_i: &CostParams, theta_j: &CostParams) -> Self {
        let (init_i, init_j) = InitialBeliefs::shared(theta_i, theta_j);
        self.init_i = init_i;
        self.init_j = init_j;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    SharedSteering,
    Phri,
}

impl FromStr for ScenarioName {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared_steering" => Ok(Self::SharedSteering),
            "phri" => Ok(Self::Phri),
            other => Err(SimError::UnknownScenario(other.to_string())),
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SharedSteering => "shared_steering",
            Self::Phri => "phri",
        })
    }
}

/// Optional replacements for scenario defaults. `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub x0: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub alpha: Option<f64>,
    pub capacity: Option<usize>,
    pub mode_i: Option<LearnerMode>,
    pub mode_j: Option<LearnerMode>,
    /// Shared initial estimate of agent i's parameters.
    pub initial_theta_i: Option<Vec<f64>>,
    /// Shared initial estimate of agent j's parameters.
    pub initial_theta_j: Option<Vec<f64>>,
    pub divergence_threshold: Option<f64>,
    /// Reference switching period (phri only).
    pub switch_period: Option<f64>,
}

/// Vehicle constants of the lateral shared-steering model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Longitudinal speed (m/s).
    pub speed: f64,
    /// Distance from c.g. to the front axle (m).
    pub a: f64,
    /// Distance from c.g. to the rear axle (m).
    pub b: f64,
    /// Front cornering stiffness (N/rad).
    pub c_front: f64,
    /// Rear cornering stiffness (N/rad).
    pub c_rear: f64,
    /// Yaw moment of inertia (kg·m²).
    pub inertia: f64,
    pub steering_ratio: f64,
    pub friction: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1296.0,
            speed: 30.0,
            a: 1.25,
            b: 1.32,
            c_front: 100_700.0,
            c_rear: 86_340.0,
            inertia: 1750.0,
            steering_ratio: 20.46,
            friction: 0.75,
        }
    }
}

impl VehicleParams {
    /// Lateral/heading error dynamics and the driver input column.
    pub fn matrices(&self) -> (Matrix, Matrix) {
        let Self { mass: m, speed: vx, a, b, c_front: cf, c_rear: cr, inertia: iz, steering_ratio: g, friction: mu } = *self;
        let moment = a * cf - b * cr;
        #[rustfmt::skip]
        let dynamics = Matrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0,
            0.0, -(cf + cr) * mu / (m * vx), (cf + cr) / m, -moment * mu / (m * vx),
            0.0, 0.0, 0.0, 1.0,
            0.0, -moment * mu / (iz * vx), moment / iz, -(a * a * cf + b * b * cr) * mu / (iz * vx),
        ]);
        let input = Matrix::from_column_slice(4, 1, &[0.0, cf * mu / (m * g), 0.0, a * cf / (iz * g)]);
        (dynamics, input)
    }
}

fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(values))
}

/// Default shared initial estimates `(θ̂_i, θ̂_j)` of the phri scenario.
pub const PHRI_INITIAL_ESTIMATES: ([f64; 2], [f64; 2]) = ([10.0, 2.5], [7.5, 5.0]);
/// Default shared initial estimates `(θ̂_1, θ̂_2)` of the shared-steering scenario.
pub const STEERING_INITIAL_ESTIMATES: (f64, f64) = (5.0, 5.0);

fn shared_steering() -> Result<ScenarioSpec, SimError> {
    let (a, b1) = VehicleParams::default().matrices();
    let b2 = &b1 * 2.0;
    let base_1 = diag(&[1.0, 0.5, 0.5, 0.25]);
    let base_2 = diag(&[1.0, 2.0, 1.0, 0.5]);
    let game = GameSpec::new(
        a,
        b1,
        b2,
        &base_1 * 2.0,
        base_2.clone(),
        QParameterization::scale(base_1)?,
        QParameterization::scale(base_2)?,
    )?;
    let learner = LearnerConfig::new(LearnerMode::Pace, 0.15, 35)?;
    let (init_i, init_j) = InitialBeliefs::shared(
        &CostParams::from_slice(&[STEERING_INITIAL_ESTIMATES.0]),
        &CostParams::from_slice(&[STEERING_INITIAL_ESTIMATES.1]),
    );
    Ok(ScenarioSpec {
        name: ScenarioName::SharedSteering.to_string(),
        game,
        x0: Vector::from_column_slice(&[1.0, 0.0, 0.5, 0.0]),
        dt: 0.01,
        duration: 20.0,
        reference_schedule: Vec::new(),
        learner_i: learner,
        learner_j: learner,
        init_i,
        init_j,
        divergence_threshold: 1e6,
    })
}

/// Mass–damper end effector driven by a human (agent i) and a robot (agent j).
pub fn phri_matrices(mass: f64, damping: f64) -> (Matrix, Matrix) {
    let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -damping / mass]);
    let b = Matrix::from_column_slice(2, 1, &[0.0, 1.0 / mass]);
    (a, b)
}

/// Error-coordinate jumps for a target toggling between `−amplitude` and
/// `+amplitude` every `period` seconds, starting at `−amplitude`, with the
/// arm initially at the origin.
pub fn toggling_reference(amplitude: f64, period: f64, duration: f64) -> Vec<ReferenceJump> {
    let mut jumps = vec![ReferenceJump {
        time: 0.0,
        offset: Vector::from_column_slice(&[amplitude, 0.0]),
    }];
    let mut target = -amplitude;
    let mut k = 1;
    while (k as f64) * period < duration - 1e-9 {
        let next = -target;
        jumps.push(ReferenceJump {
            time: k as f64 * period,
            offset: Vector::from_column_slice(&[-(next - target), 0.0]),
        });
        target = next;
        k += 1;
    }
    jumps
}

/// Error-coordinate jumps for a target moving at constant `velocity`,
/// sampled every `dt` from `dt` up to `duration`.
pub fn ramp_reference(velocity: &Vector, dt: f64, duration: f64) -> Vec<ReferenceJump> {
    let steps = (duration / dt).round() as usize;
    (1..=steps)
        .map(|k| ReferenceJump {
            time: k as f64 * dt,
            offset: -velocity * dt,
        })
        .collect()
}

/// Scalar game `ẋ = a·x + u_i + u_j` with equal costs `q` on both agents,
/// tracking a target that moves at unit speed. The state starts at the
/// Nash tracking offset so the history window is excited from the first
/// epoch. Both agents start from the shared estimate `q/2`.
pub fn scalar_toy(a: f64, q: f64, duration: f64) -> Result<ScenarioSpec, SimError> {
    let m = |v: f64| Matrix::from_element(1, 1, v);
    let param = QParameterization::Diagonal { dim: 1 };
    let game = GameSpec::new(m(a), m(1.0), m(1.0), m(q), m(q), param.clone(), param)?;
    let nash = game.nash().map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    let closed = a - nash.p_i.p[(0, 0)] - nash.p_j.p[(0, 0)];
    let velocity = Vector::from_element(1, 1.0);
    let learner = LearnerConfig::new(LearnerMode::Pace, 0.1, 15)?;
    let start = CostParams::from_slice(&[0.5 * q]);
    let (init_i, init_j) = InitialBeliefs::shared(&start, &start);
    let dt = 0.01;
    Ok(ScenarioSpec {
        name: "scalar_toy".into(),
        game,
        x0: Vector::from_element(1, 1.0 / closed),
        dt,
        duration,
        reference_schedule: ramp_reference(&velocity, dt, duration),
        learner_i: learner,
        learner_j: learner,
        init_i,
        init_j,
        divergence_threshold: 1e6,
    })
}

fn phri(switch_period: f64, duration: f64) -> Result<ScenarioSpec, SimError> {
    let (a, b) = phri_matrices(6.0, 0.2);
    let param = QParameterization::Diagonal { dim: 2 };
    let game = GameSpec::new(
        a,
        b.clone(),
        b,
        diag(&[100.0, 25.0]),
        diag(&[75.0, 50.0]),
        param.clone(),
        param,
    )?;
    let learner = LearnerConfig::new(LearnerMode::Pace, 0.1, 15)?;
    let (init_i, init_j) = InitialBeliefs::shared(
        &CostParams::from_slice(&PHRI_INITIAL_ESTIMATES.0),
        &CostParams::from_slice(&PHRI_INITIAL_ESTIMATES.1),
    );
    Ok(ScenarioSpec {
        name: ScenarioName::Phri.to_string(),
        game,
        x0: Vector::zeros(2),
        dt: 0.01,
        duration,
        reference_schedule: toggling_reference(0.1, switch_period, duration),
        learner_i: learner,
        learner_j: learner,
        init_i,
        init_j,
        divergence_threshold: 1e6,
    })
}

/// Builds one of the two reference scenarios with defaults, then applies `overrides`.
pub fn build_scenario(name: ScenarioName, overrides: &ScenarioOverrides) -> Result<ScenarioSpec, SimError> {
    let mut spec = match name {
        ScenarioName::SharedSteering => shared_steering()?,
        ScenarioName::Phri => phri(
            overrides.switch_period.unwrap_or(2.0),
            overrides.duration.unwrap_or(40.0),
        )?,
    };
    if overrides.switch_period.is_some() && name != ScenarioName::Phri {
        return Err(SimError::InvalidScenario("switch_period only applies to phri".into()));
    }
    if let Some(x0) = &overrides.x0 {
        spec.x0 = Vector::from_column_slice(x0);
    }
    if let Some(dt) = overrides.dt {
        spec.dt = dt;
    }
    if let Some(duration) = overrides.duration {
        spec.duration = duration;
    }
    if let Some(alpha) = overrides.alpha {
        spec = spec.with_alpha(alpha);
    }
    if let Some(capacity) = overrides.capacity {
        spec = spec.with_capacity(capacity);
    }
    if let Some(mode) = overrides.mode_i {
        spec.learner_i.mode = mode;
    }
    if let Some(mode) = overrides.mode_j {
        spec.learner_j.mode = mode;
    }
    if overrides.initial_theta_i.is_some() || overrides.initial_theta_j.is_some() {
        let theta_i = overrides
            .initial_theta_i
            .as_deref()
            .map(CostParams::from_slice)
            .unwrap_or_else(|| spec.init_j.theta_peer.clone());
        let theta_j = overrides
            .initial_theta_j
            .as_deref()
            .map(CostParams::from_slice)
            .unwrap_or_else(|| spec.init_i.theta_peer.clone());
        for (agent, theta) in [(crate::Agent::I, &theta_i), (crate::Agent::J, &theta_j)] {
            let expected = spec.game.param(agent).num_params();
            if theta.len() != expected {
                return Err(SimError::InvalidScenario(format!(
                    "initial estimate of agent {agent} needs {expected} values"
                )));
            }
        }
        spec = spec.with_initial_estimates(&theta_i, &theta_j);
    }
    if let Some(threshold) = overrides.divergence_threshold {
        spec.divergence_threshold = threshold;
    }
    spec.validate()?;
    Ok(spec)
}
