//! Peer-aware cost estimation.
//!
//! Each agent keeps a sliding history of observed states, its own controls
//! and the gain pair it predicted at the time. At every epoch it replays that
//! history twice: once to predict the observed states from its estimate of
//! the peer's cost (its own loss), and once to reproduce the error its peer
//! would see when predicting the agent's own controls (the peer's loss, as
//! modeled by the agent). Both losses are differentiated through the
//! per-entry Riccati reconstructions, the estimates take one projected
//! gradient step, and a coupled Riccati solve predicts the next gain pair.
//!
//! The peer-optimal variant models the peer as already knowing the agent's
//! true gain: the coupling term of the peer reconstruction uses the agent's
//! applied gain and the agent's self-estimate stays pinned to its true cost.

use std::collections::VecDeque;

use thiserror::Error;

use crate::lqgame::{
    feedback_control, project_theta, simulate_segment, theta_to_q, Agent, CostParams, GameError,
    GameSpec, QParameterization, DEFAULT_EPSILON_PD,
};
use crate::riccati::{
    solve_are_with, symmetric_eigenvalues, AreSpec, LyapunovOperator, Matrix, RiccatiError,
    RiccatiSolution, SolverOptions, Vector,
};

#[derive(Debug, Clone, Error)]
pub enum PaceError {
    #[error("history time {new} does not follow last recorded time {last}")]
    NonMonotoneTime { last: f64, new: f64 },
    #[error("history stack is empty")]
    EmptyHistory,
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("initial beliefs admit no stabilizing gain pair: {0}")]
    InfeasibleInitialization(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
}

pub type Result<T> = std::result::Result<T, PaceError>;

/// One decision epoch as remembered by an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub tau: f64,
    pub x: Vector,
    pub u_self: Vector,
    /// Predicted own gain (what the peer is believed to use for this agent).
    pub p_self_hat: Matrix,
    /// Predicted peer gain.
    pub p_peer_hat: Matrix,
    /// Gain the agent actually applied; the peer-optimal variant couples through it.
    pub p_policy: Matrix,
    /// Known state jump (reference switch) applied just before this entry was observed.
    pub offset: Option<Vector>,
}

/// Sliding window of the most recent `capacity` epochs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStack {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl HistoryStack {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(PaceError::InvalidConfig("history capacity must be positive".into()));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity + 1),
            capacity,
        })
    }

    /// Appends `entry`, evicting the oldest one when over capacity.
    pub fn record(&mut self, entry: HistoryEntry) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if !(entry.tau > last.tau) {
                return Err(PaceError::NonMonotoneTime {
                    last: last.tau,
                    new: entry.tau,
                });
            }
        }
        self.entries.push_back(entry);
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn get(&self, index: usize) -> Option<&HistoryEntry> {
        self.entries.get(index)
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.back()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerMode {
    /// Models the peer as a gradient learner (full peer-aware estimation).
    Pace,
    /// Models the peer as knowing this agent's true cost.
    PeerOptimal,
}

impl LearnerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerMode::Pace => "pace",
            LearnerMode::PeerOptimal => "peer-optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub mode: LearnerMode,
    /// Gradient step size.
    pub alpha: f64,
    /// History stack capacity `N`.
    pub capacity: usize,
    pub epsilon_pd: f64,
    pub solver: SolverOptions,
}

impl LearnerConfig {
    pub fn new(mode: LearnerMode, alpha: f64, capacity: usize) -> Result<Self> {
        let config = Self {
            mode,
            alpha,
            capacity,
            epsilon_pd: DEFAULT_EPSILON_PD,
            solver: SolverOptions::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(PaceError::InvalidConfig(format!("alpha = {}", self.alpha)));
        }
        if self.capacity == 0 {
            return Err(PaceError::InvalidConfig("capacity must be at least 1".into()));
        }
        if !(self.epsilon_pd > 0.0) {
            return Err(PaceError::InvalidConfig(format!("epsilon_pd = {}", self.epsilon_pd)));
        }
        Ok(())
    }
}

/// An agent's paired cost estimates and the gain pair they predict.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    /// Estimate of the peer's cost parameters.
    pub theta_peer: CostParams,
    /// Estimate of the peer's estimate of this agent's cost parameters.
    pub theta_self: CostParams,
    pub p_self_hat: Matrix,
    pub p_peer_hat: Matrix,
}

/// The game seen from one agent: which input is "self" and which is "peer".
#[derive(Debug, Clone, Copy)]
pub struct Perspective<'a> {
    pub game: &'a GameSpec,
    pub agent: Agent,
}

impl<'a> Perspective<'a> {
    pub fn new(game: &'a GameSpec, agent: Agent) -> Self {
        Self { game, agent }
    }

    pub fn b_self(&self) -> &'a Matrix {
        self.game.b(self.agent)
    }

    pub fn b_peer(&self) -> &'a Matrix {
        self.game.b(self.agent.other())
    }

    pub fn param_self(&self) -> &'a QParameterization {
        self.game.param(self.agent)
    }

    pub fn param_peer(&self) -> &'a QParameterization {
        self.game.param(self.agent.other())
    }

    /// Coupled Nash pair `(P_self, P_peer)` for the given costs.
    pub fn coupled(
        &self,
        q_self: &Matrix,
        q_peer: &Matrix,
        opts: &SolverOptions,
        guess: Option<(&Matrix, &Matrix)>,
    ) -> std::result::Result<(Matrix, Matrix), RiccatiError> {
        let sol = match self.agent {
            Agent::I => self.game.solve_coupled(q_self, q_peer, opts, guess),
            Agent::J => self
                .game
                .solve_coupled(q_peer, q_self, opts, guess.map(|(s, p)| (p, s))),
        }?;
        Ok(match self.agent {
            Agent::I => (sol.p_i.p, sol.p_j.p),
            Agent::J => (sol.p_j.p, sol.p_i.p),
        })
    }
}

impl BeliefState {
    /// Projects both estimates and solves the coupled equations they imply.
    pub fn initialize(
        game: &GameSpec,
        agent: Agent,
        theta_peer: CostParams,
        theta_self: CostParams,
        config: &LearnerConfig,
    ) -> Result<Self> {
        let view = Perspective::new(game, agent);
        let theta_peer = project_theta(view.param_peer(), &theta_peer, config.epsilon_pd);
        let theta_self = match config.mode {
            LearnerMode::Pace => project_theta(view.param_self(), &theta_self, config.epsilon_pd),
            LearnerMode::PeerOptimal => game.true_theta(agent),
        };
        let q_self = theta_to_q(view.param_self(), &theta_self)?;
        let q_peer = theta_to_q(view.param_peer(), &theta_peer)?;
        let (p_self_hat, p_peer_hat) = view
            .coupled(&q_self, &q_peer, &config.solver, None)
            .map_err(|e| PaceError::InfeasibleInitialization(e.to_string()))?;
        Ok(Self {
            theta_peer,
            theta_self,
            p_self_hat,
            p_peer_hat,
        })
    }
}

/// Riccati reconstructions at one history entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedGains {
    /// Peer gain implied by the current peer estimate.
    pub peer: RiccatiSolution,
    pub peer_drift: Matrix,
    /// Own gain the peer would compute from the current self estimate
    /// (absent in peer-optimal mode).
    pub own: Option<RiccatiSolution>,
    pub own_drift: Option<Matrix>,
}

/// Solves the one-sided Riccati equations at `entry` for the current estimates.
///
/// The peer equation couples through the stored own-gain prediction (or the
/// applied gain in peer-optimal mode); the own equation couples through the
/// stored peer-gain prediction.
pub fn reconstruct_gains_at(
    game: &GameSpec,
    agent: Agent,
    entry: &HistoryEntry,
    theta_peer: &CostParams,
    theta_self: &CostParams,
    mode: LearnerMode,
    opts: &SolverOptions,
) -> Result<ReconstructedGains> {
    let view = Perspective::new(game, agent);
    let (b_self, b_peer) = (view.b_self(), view.b_peer());
    let coupling = match mode {
        LearnerMode::Pace => &entry.p_self_hat,
        LearnerMode::PeerOptimal => &entry.p_policy,
    };
    let peer_spec = AreSpec {
        drift: &game.a - b_self * (b_self.transpose() * coupling),
        input: b_peer.clone(),
        state_cost: theta_to_q(view.param_peer(), theta_peer)?,
    };
    let peer = solve_are_with(&peer_spec, opts, Some(&entry.p_peer_hat))?;

    let (own, own_drift) = match mode {
        LearnerMode::Pace => {
            let own_spec = AreSpec {
                drift: &game.a - b_peer * (b_peer.transpose() * &entry.p_peer_hat),
                input: b_self.clone(),
                state_cost: theta_to_q(view.param_self(), theta_self)?,
            };
            let own = solve_are_with(&own_spec, opts, Some(&entry.p_self_hat))?;
            (Some(own), Some(own_spec.drift))
        }
        LearnerMode::PeerOptimal => (None, None),
    };
    Ok(ReconstructedGains {
        peer,
        peer_drift: peer_spec.drift,
        own,
        own_drift,
    })
}

/// Replayed trajectories over the history window.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Predicted states, starting from the first observed state.
    pub x_hat: Vec<Vector>,
    /// Modeled peer prediction error, starting from zero.
    pub e: Vec<Vector>,
    pub u_peer_hat: Vec<Vector>,
    pub u_self_hat: Vec<Option<Vector>>,
}

/// Integrates the predicted state and the modeled peer error over the window,
/// holding each entry's controls for the interval up to the next entry.
pub fn predict_trajectories(
    game: &GameSpec,
    agent: Agent,
    stack: &HistoryStack,
    gains: &[ReconstructedGains],
) -> Result<Predictions> {
    let first = stack.get(0).ok_or(PaceError::EmptyHistory)?;
    if gains.len() != stack.len() {
        return Err(PaceError::InvalidConfig(format!(
            "{} reconstructions for {} history entries",
            gains.len(),
            stack.len()
        )));
    }
    let view = Perspective::new(game, agent);
    let (b_self, b_peer) = (view.b_self(), view.b_peer());

    let u_peer_hat: Vec<Vector> = stack
        .iter()
        .zip(gains)
        .map(|(entry, g)| feedback_control(b_peer, &g.peer.p, &entry.x))
        .collect();
    let u_self_hat: Vec<Option<Vector>> = stack
        .iter()
        .zip(gains)
        .map(|(entry, g)| g.own.as_ref().map(|own| feedback_control(b_self, &own.p, &entry.x)))
        .collect();

    let n = game.state_dim();
    let m_peer = b_peer.ncols();
    let mut x_hat = Vec::with_capacity(stack.len());
    let mut e = Vec::with_capacity(stack.len());
    x_hat.push(first.x.clone());
    e.push(Vector::zeros(n));
    let zero_peer = Vector::zeros(m_peer);
    for k in 1..stack.len() {
        let prev = &stack.get(k - 1).expect("index in range");
        let cur = &stack.get(k).expect("index in range");
        let dt = cur.tau - prev.tau;
        let mut next = simulate_segment(
            &game.a,
            b_self,
            b_peer,
            &x_hat[k - 1],
            &prev.u_self,
            &u_peer_hat[k - 1],
            dt,
            1,
        )?;
        if let Some(offset) = &cur.offset {
            next += offset;
        }
        x_hat.push(next);
        let e_next = match &u_self_hat[k - 1] {
            Some(u_hat) => simulate_segment(
                &game.a,
                b_self,
                b_peer,
                &e[k - 1],
                &(&prev.u_self - u_hat),
                &zero_peer,
                dt,
                1,
            )?,
            None => Vector::zeros(n),
        };
        e.push(e_next);
    }
    Ok(Predictions {
        x_hat,
        e,
        u_peer_hat,
        u_self_hat,
    })
}

/// Mean squared prediction error of the observed states and mean squared
/// modeled peer error.
pub fn compute_losses(x_observed: &[Vector], x_hat: &[Vector], e: &[Vector]) -> (f64, f64) {
    assert_eq!(x_observed.len(), x_hat.len(), "observed/predicted length mismatch");
    assert_eq!(x_observed.len(), e.len(), "observed/error length mismatch");
    if x_observed.is_empty() {
        return (0.0, 0.0);
    }
    let count = x_observed.len() as f64;
    let own = x_observed
        .iter()
        .zip(x_hat)
        .map(|(x, xh)| (x - xh).norm_squared())
        .sum::<f64>()
        / count;
    let peer = e.iter().map(|v| v.norm_squared()).sum::<f64>() / count;
    (own, peer)
}

/// Losses, gradients and the intermediate replay of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss_self: f64,
    pub loss_peer_model: f64,
    /// `∂L_self/∂θ̂_peer`.
    pub grad_peer: Vector,
    /// `∂L_peer_model/∂θ̂_self` (zero in peer-optimal mode).
    pub grad_self: Vector,
    pub gains: Vec<ReconstructedGains>,
    pub predictions: Predictions,
}

fn reconstruct_all(
    game: &GameSpec,
    agent: Agent,
    stack: &HistoryStack,
    theta_peer: &CostParams,
    theta_self: &CostParams,
    mode: LearnerMode,
    opts: &SolverOptions,
) -> Result<Vec<ReconstructedGains>> {
    stack
        .iter()
        .map(|entry| reconstruct_gains_at(game, agent, entry, theta_peer, theta_self, mode, opts))
        .collect()
}

/// Losses only, without sensitivities.
pub fn evaluate_losses(
    game: &GameSpec,
    agent: Agent,
    stack: &HistoryStack,
    theta_peer: &CostParams,
    theta_self: &CostParams,
    mode: LearnerMode,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    let gains = reconstruct_all(game, agent, stack, theta_peer, theta_self, mode, opts)?;
    let pred = predict_trajectories(game, agent, stack, &gains)?;
    let observed: Vec<Vector> = stack.iter().map(|e| e.x.clone()).collect();
    Ok(compute_losses(&observed, &pred.x_hat, &pred.e))
}

/// Analytic gradients of both losses by forward sensitivity propagation.
///
/// For each scalar parameter the Riccati sensitivity at every entry comes
/// from a Lyapunov equation in that entry's closed loop; the resulting
/// control perturbations drive a variational copy of the same discrete
/// integrator used for the prediction, so the gradient is exact for the
/// discretized loss.
pub fn compute_gradients(
    game: &GameSpec,
    agent: Agent,
    stack: &HistoryStack,
    theta_peer: &CostParams,
    theta_self: &CostParams,
    mode: LearnerMode,
    opts: &SolverOptions,
) -> Result<Evaluation> {
    if stack.is_empty() {
        return Err(PaceError::EmptyHistory);
    }
    let view = Perspective::new(game, agent);
    let (b_self, b_peer) = (view.b_self(), view.b_peer());
    let gains = reconstruct_all(game, agent, stack, theta_peer, theta_self, mode, opts)?;
    let predictions = predict_trajectories(game, agent, stack, &gains)?;
    let observed: Vec<Vector> = stack.iter().map(|e| e.x.clone()).collect();
    let (loss_self, loss_peer_model) = compute_losses(&observed, &predictions.x_hat, &predictions.e);

    let len = stack.len();
    let scale = 2.0 / len as f64;
    let n = game.state_dim();
    let zero_self = Vector::zeros(b_self.ncols());
    let zero_peer = Vector::zeros(b_peer.ncols());

    // The last entry's control never enters the window, so only the first
    // len-1 sensitivities are needed.
    let param_peer = view.param_peer();
    let mut grad_peer = Vector::zeros(param_peer.num_params());
    let residuals: Vec<Vector> = observed
        .iter()
        .zip(&predictions.x_hat)
        .map(|(x, xh)| x - xh)
        .collect();
    if len > 1 && residuals.iter().any(|r| r.norm_squared() > 0.0) {
        let ops = gains[..len - 1]
            .iter()
            .map(|g| {
                let closed = &g.peer_drift - b_peer * (b_peer.transpose() * &g.peer.p);
                LyapunovOperator::new_unchecked(&closed)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        for (idx, slot) in grad_peer.iter_mut().enumerate() {
            let dq = param_peer.partial(idx);
            let mut dx = Vector::zeros(n);
            let mut acc = 0.0;
            for k in 1..len {
                let prev = stack.get(k - 1).expect("index in range");
                let cur = stack.get(k).expect("index in range");
                let dp = ops[k - 1].solve(&dq)?;
                let du = feedback_control(b_peer, &dp, &prev.x);
                dx = simulate_segment(&game.a, b_self, b_peer, &dx, &zero_self, &du, cur.tau - prev.tau, 1)?;
                acc += residuals[k].dot(&dx);
            }
            *slot = -scale * acc;
        }
    }

    let param_self = view.param_self();
    let mut grad_self = Vector::zeros(param_self.num_params());
    if mode == LearnerMode::Pace && len > 1 && predictions.e.iter().any(|e| e.norm_squared() > 0.0) {
        let ops = gains[..len - 1]
            .iter()
            .map(|g| {
                let own = g.own.as_ref().expect("own gain reconstructed in PACE mode");
                let drift = g.own_drift.as_ref().expect("own drift recorded in PACE mode");
                let closed = drift - b_self * (b_self.transpose() * &own.p);
                LyapunovOperator::new_unchecked(&closed)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        for (idx, slot) in grad_self.iter_mut().enumerate() {
            let dq = param_self.partial(idx);
            let mut de = Vector::zeros(n);
            let mut acc = 0.0;
            for k in 1..len {
                let prev = stack.get(k - 1).expect("index in range");
                let cur = stack.get(k).expect("index in range");
                let dp = ops[k - 1].solve(&dq)?;
                // e is forced by u − û, and ∂û/∂θ = −Bᵀ ∂P x.
                let du_hat = feedback_control(b_self, &dp, &prev.x);
                de = simulate_segment(&game.a, b_self, b_peer, &de, &(-du_hat), &zero_peer, cur.tau - prev.tau, 1)?;
                acc += predictions.e[k].dot(&de);
            }
            *slot = scale * acc;
        }
    }

    Ok(Evaluation {
        loss_self,
        loss_peer_model,
        grad_peer,
        grad_self,
        gains,
        predictions,
    })
}

/// Something the belief step could not do, recorded rather than raised.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    /// A reconstruction or gradient failed; the estimates were left unchanged.
    UpdateRejected(String),
    /// The coupled solve failed; the previous gain pair was kept.
    PredictionKept(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefStep {
    pub beliefs: BeliefState,
    pub evaluation: Option<Evaluation>,
    pub events: Vec<StepEvent>,
}

/// One projected gradient step on both estimates followed by the coupled
/// prediction of the next gain pair.
pub fn belief_step(
    game: &GameSpec,
    agent: Agent,
    stack: &HistoryStack,
    beliefs: &BeliefState,
    config: &LearnerConfig,
) -> BeliefStep {
    let view = Perspective::new(game, agent);
    let evaluation = match compute_gradients(
        game,
        agent,
        stack,
        &beliefs.theta_peer,
        &beliefs.theta_self,
        config.mode,
        &config.solver,
    ) {
        Ok(ev) => ev,
        Err(e) => {
            return BeliefStep {
                beliefs: beliefs.clone(),
                evaluation: None,
                events: vec![StepEvent::UpdateRejected(e.to_string())],
            }
        }
    };

    let theta_peer = project_theta(
        view.param_peer(),
        &CostParams::new(&beliefs.theta_peer.theta - &evaluation.grad_peer * config.alpha),
        config.epsilon_pd,
    );
    let theta_self = match config.mode {
        LearnerMode::Pace => project_theta(
            view.param_self(),
            &CostParams::new(&beliefs.theta_self.theta - &evaluation.grad_self * config.alpha),
            config.epsilon_pd,
        ),
        LearnerMode::PeerOptimal => game.true_theta(agent),
    };

    let mut events = Vec::new();
    let unchanged = theta_peer == beliefs.theta_peer && theta_self == beliefs.theta_self;
    let (p_self_hat, p_peer_hat) = if unchanged {
        (beliefs.p_self_hat.clone(), beliefs.p_peer_hat.clone())
    } else {
        let solved = theta_to_q(view.param_self(), &theta_self)
            .and_then(|qs| theta_to_q(view.param_peer(), &theta_peer).map(|qp| (qs, qp)))
            .map_err(PaceError::from)
            .and_then(|(qs, qp)| {
                view.coupled(
                    &qs,
                    &qp,
                    &config.solver,
                    Some((&beliefs.p_self_hat, &beliefs.p_peer_hat)),
                )
                .map_err(PaceError::from)
            });
        match solved {
            Ok(pair) => pair,
            Err(e) => {
                events.push(StepEvent::PredictionKept(e.to_string()));
                (beliefs.p_self_hat.clone(), beliefs.p_peer_hat.clone())
            }
        }
    };

    BeliefStep {
        beliefs: BeliefState {
            theta_peer,
            theta_self,
            p_self_hat,
            p_peer_hat,
        },
        evaluation: Some(evaluation),
        events,
    }
}

/// The agent's own gain against its current peer-gain prediction, using its
/// true state cost.
pub fn policy_gain(
    game: &GameSpec,
    agent: Agent,
    p_peer_hat: &Matrix,
    opts: &SolverOptions,
    guess: Option<&Matrix>,
) -> Result<RiccatiSolution> {
    let view = Perspective::new(game, agent);
    let b_peer = view.b_peer();
    let spec = AreSpec {
        drift: &game.a - b_peer * (b_peer.transpose() * p_peer_hat),
        input: view.b_self().clone(),
        state_cost: game.q(agent).clone(),
    };
    Ok(solve_are_with(&spec, opts, guess)?)
}

/// Spectrum of the estimated update matrix and the step-size bound it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDiagnostic {
    /// Eigenvalues of the symmetrized Jacobian, ascending.
    pub eigenvalues: Vec<f64>,
    /// `2 / λ_max`, or `+∞` when the window carries no excitation.
    pub alpha_max: f64,
    pub finite: bool,
}

impl SpectrumDiagnostic {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Central-difference Jacobian of the gradient map `θ̂ ↦ ∂L/∂θ̂` at the
/// current beliefs, with the history held fixed.
///
/// In PACE mode the map acts on the stacked vector `(θ̂_peer, θ̂_self)`;
/// in peer-optimal mode only on `θ̂_peer`.
pub fn update_spectrum_diagnostic(
    game: &GameSpec,
    agent: Agent,
    stack: &HistoryStack,
    beliefs: &BeliefState,
    config: &LearnerConfig,
) -> Result<SpectrumDiagnostic> {
    const STEP: f64 = 1e-5;
    let n_peer = beliefs.theta_peer.len();
    let n_self = match config.mode {
        LearnerMode::Pace => beliefs.theta_self.len(),
        LearnerMode::PeerOptimal => 0,
    };
    let dim = n_peer + n_self;
    let stacked = |tp: &Vector, ts: &Vector| -> Result<Vector> {
        let ev = compute_gradients(
            game,
            agent,
            stack,
            &CostParams::new(tp.clone()),
            &CostParams::new(ts.clone()),
            config.mode,
            &config.solver,
        )?;
        let mut g = Vector::zeros(dim);
        g.rows_mut(0, n_peer).copy_from(&ev.grad_peer);
        if n_self > 0 {
            g.rows_mut(n_peer, n_self).copy_from(&ev.grad_self);
        }
        Ok(g)
    };
    let mut jac = Matrix::zeros(dim, dim);
    for c in 0..dim {
        let (mut tp_plus, mut ts_plus) = (beliefs.theta_peer.theta.clone(), beliefs.theta_self.theta.clone());
        let (mut tp_minus, mut ts_minus) = (tp_plus.clone(), ts_plus.clone());
        if c < n_peer {
            tp_plus[c] += STEP;
            tp_minus[c] -= STEP;
        } else {
            ts_plus[c - n_peer] += STEP;
            ts_minus[c - n_peer] -= STEP;
        }
        let col = (stacked(&tp_plus, &ts_plus)? - stacked(&tp_minus, &ts_minus)?) / (2.0 * STEP);
        jac.set_column(c, &col);
    }
    let finite = jac.iter().all(|v| v.is_finite());
    if !finite {
        return Ok(SpectrumDiagnostic {
            eigenvalues: Vec::new(),
            alpha_max: f64::NAN,
            finite,
        });
    }
    let eigenvalues = symmetric_eigenvalues(&jac);
    let lambda_max = eigenvalues.last().copied().unwrap_or(0.0);
    let alpha_max = if lambda_max > 0.0 {
        2.0 / lambda_max
    } else {
        f64::INFINITY
    };
    Ok(SpectrumDiagnostic {
        eigenvalues,
        alpha_max,
        finite,
    })
}

/// Per-epoch outcome of [`Learner::update`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerUpdate {
    pub loss_self: Option<f64>,
    pub loss_peer_model: Option<f64>,
    /// Peer control predicted at the newest entry.
    pub predicted_peer_control: Option<Vector>,
    pub events: Vec<StepEvent>,
}

/// One agent running the estimation loop: beliefs, history and applied gain.
#[derive(Debug, Clone)]
pub struct Learner {
    agent: Agent,
    config: LearnerConfig,
    beliefs: BeliefState,
    stack: HistoryStack,
    policy: RiccatiSolution,
}

impl Learner {
    /// Initial beliefs, their coupled gain pair, and the first policy.
    pub fn new(
        game: &GameSpec,
        agent: Agent,
        config: LearnerConfig,
        theta_peer: CostParams,
        theta_self: CostParams,
    ) -> Result<Self> {
        config.validate()?;
        let beliefs = BeliefState::initialize(game, agent, theta_peer, theta_self, &config)?;
        let policy = policy_gain(game, agent, &beliefs.p_peer_hat, &config.solver, Some(&beliefs.p_self_hat))
            .map_err(|e| PaceError::InfeasibleInitialization(e.to_string()))?;
        Ok(Self {
            agent,
            config,
            beliefs,
            stack: HistoryStack::new(config.capacity)?,
            policy,
        })
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn beliefs(&self) -> &BeliefState {
        &self.beliefs
    }

    pub fn history(&self) -> &HistoryStack {
        &self.stack
    }

    pub fn policy(&self) -> &RiccatiSolution {
        &self.policy
    }

    /// Control the agent applies at state `x`.
    pub fn control(&self, game: &GameSpec, x: &Vector) -> Vector {
        feedback_control(game.b(self.agent), &self.policy.p, x)
    }

    /// Computes and records the control for the observation `(tau, x)`.
    pub fn observe(
        &mut self,
        game: &GameSpec,
        tau: f64,
        x: &Vector,
        offset: Option<Vector>,
    ) -> Result<Vector> {
        let u = self.control(game, x);
        self.stack.record(HistoryEntry {
            tau,
            x: x.clone(),
            u_self: u.clone(),
            p_self_hat: self.beliefs.p_self_hat.clone(),
            p_peer_hat: self.beliefs.p_peer_hat.clone(),
            p_policy: self.policy.p.clone(),
            offset,
        })?;
        Ok(u)
    }

    /// Belief step followed by the policy update. A failed policy solve is an error.
    pub fn update(&mut self, game: &GameSpec) -> Result<LearnerUpdate> {
        let step = belief_step(game, self.agent, &self.stack, &self.beliefs, &self.config);
        let predicted_peer_control = step
            .evaluation
            .as_ref()
            .and_then(|ev| ev.predictions.u_peer_hat.last().cloned());
        let update = LearnerUpdate {
            loss_self: step.evaluation.as_ref().map(|ev| ev.loss_self),
            loss_peer_model: step.evaluation.as_ref().map(|ev| ev.loss_peer_model),
            predicted_peer_control,
            events: step.events,
        };
        if step.beliefs.p_peer_hat != self.beliefs.p_peer_hat {
            self.policy = policy_gain(
                game,
                self.agent,
                &step.beliefs.p_peer_hat,
                &self.config.solver,
                Some(&self.policy.p),
            )?;
        }
        self.beliefs = step.beliefs;
        Ok(update)
    }

    /// Spectral diagnostic of the current window.
    pub fn spectrum(&self, game: &GameSpec) -> Result<SpectrumDiagnostic> {
        update_spectrum_diagnostic(game, self.agent, &self.stack, &self.beliefs, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn entry(tau: f64) -> HistoryEntry {
        HistoryEntry {
            tau,
            x: Vector::from_element(1, tau),
            u_self: Vector::zeros(1),
            p_self_hat: scalar(1.0),
            p_peer_hat: scalar(1.0),
            p_policy: scalar(1.0),
            offset: None,
        }
    }

    #[test]
    fn stack_evicts_oldest() {
        let mut stack = HistoryStack::new(3).unwrap();
        stack.record(entry(0.0)).unwrap();
        assert_eq!(stack.len(), 1);
        for k in 1..4 {
            stack.record(entry(k as f64)).unwrap();
        }
        assert_eq!(stack.len(), 3);
        assert_eq!(stack.get(0).unwrap().tau, 1.0);
    }

    #[test]
    fn stack_keeps_last_window() {
        let mut stack = HistoryStack::new(35).unwrap();
        for k in 0..100 {
            stack.record(entry(k as f64 * 0.01)).unwrap();
        }
        let taus: Vec<f64> = stack.iter().map(|e| e.tau).collect();
        let expected: Vec<f64> = (65..100).map(|k| k as f64 * 0.01).collect();
        assert_eq!(taus, expected);
    }

    #[test]
    fn stack_rejects_non_increasing_time() {
        let mut stack = HistoryStack::new(3).unwrap();
        stack.record(entry(1.0)).unwrap();
        assert!(matches!(stack.record(entry(1.0)), Err(PaceError::NonMonotoneTime { .. })));
        assert!(matches!(stack.record(entry(0.5)), Err(PaceError::NonMonotoneTime { .. })));
        assert!(HistoryStack::new(0).is_err());
    }

    #[test]
    fn losses_arithmetic() {
        let x = vec![Vector::from_column_slice(&[1.0, 0.0]), Vector::from_column_slice(&[0.0, 2.0])];
        let zero = vec![Vector::zeros(2), Vector::zeros(2)];
        assert_eq!(compute_losses(&x, &x, &zero), (0.0, 0.0));
        let (l, _) = compute_losses(&x, &zero, &zero);
        assert_eq!(l, 2.5);
        let doubled: Vec<Vector> = x.iter().map(|v| v * 2.0).collect();
        let (l2, le) = compute_losses(&doubled, &zero, &doubled);
        assert_eq!(l2, 10.0);
        assert_eq!(le, 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::new(LearnerMode::Pace, 0.0, 5).is_err());
        assert!(LearnerConfig::new(LearnerMode::Pace, 0.1, 0).is_err());
        assert!(LearnerConfig::new(LearnerMode::Pace, f64::NAN, 5).is_err());
        assert!(LearnerConfig::new(LearnerMode::PeerOptimal, 0.1, 1).is_ok());
    }
}
