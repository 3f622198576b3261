//! Two-player linear-quadratic game model: cost parameterizations, the
//! feedback law and zero-order-hold integration of the shared dynamics.

use std::fmt;

use thiserror::Error;

use crate::riccati::{
    self, symmetric_eigenvalues, symmetrize, CoupledAreSpec, CoupledSolution, Matrix, RiccatiError,
    SolverOptions, Vector,
};

/// Positivity floor applied by [`project_theta`].
pub const DEFAULT_EPSILON_PD: f64 = 1e-6;

#[derive(Debug, Clone, Error)]
pub enum GameError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state cost of agent {0} is not symmetric positive semi-definite")]
    NotPsd(Agent),
    #[error("pair (A, B) of agent {0} is not controllable")]
    Uncontrollable(Agent),
    #[error("true cost of agent {0} is not representable in its parameterization")]
    Unrepresentable(Agent),
    #[error("state became non-finite during integration")]
    NonFiniteState,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
}

/// One of the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Agent {
    I,
    J,
}

impl Agent {
    pub fn other(self) -> Agent {
        match self {
            Agent::I => Agent::J,
            Agent::J => Agent::I,
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Agent::I => "i",
            Agent::J => "j",
        })
    }
}

/// Parameter vector of a state cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub theta: Vector,
}

impl CostParams {
    pub fn new(theta: Vector) -> Self {
        Self { theta }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(Vector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// How a parameter vector θ maps onto a state cost matrix `Q(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum QParameterization {
    /// `Q = θ · base` with a single scalar θ.
    Scale { base: Matrix },
    /// `Q = diag(θ)`.
    Diagonal { dim: usize },
    /// `θ = vec(Q)` (column-major), symmetrized on the way back.
    Full { dim: usize },
}

impl QParameterization {
    pub fn scale(base: Matrix) -> Result<Self, GameError> {
        if !base.is_square() || base.iter().any(|v| *v < 0.0) {
            return Err(GameError::InvalidArgument(
                "scale base must be square with nonnegative entries".into(),
            ));
        }
        if base.diagonal().iter().all(|v| *v == 0.0) {
            return Err(GameError::InvalidArgument("scale base has an empty diagonal".into()));
        }
        Ok(Self::Scale { base })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        match self {
            Self::Scale { base } => base.nrows(),
            Self::Diagonal { dim } | Self::Full { dim } => *dim,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Self::Scale { .. } => 1,
            Self::Diagonal { dim } => *dim,
            Self::Full { dim } => dim * dim,
        }
    }

    fn check(&self, theta: &CostParams) -> Result<(), GameError> {
        if theta.len() != self.num_params() {
            return Err(GameError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        Ok(())
    }

    /// `∂Q/∂θ_index`; constant because every parameterization is linear.
    pub fn partial(&self, index: usize) -> Matrix {
        let n = self.state_dim();
        match self {
            Self::Scale { base } => base.clone(),
            Self::Diagonal { .. } => {
                let mut e = Matrix::zeros(n, n);
                e[(index, index)] = 1.0;
                e
            }
            Self::Full { .. } => {
                let (row, col) = (index % n, index / n);
                let mut s = Matrix::zeros(n, n);
                s[(row, col)] += 0.5;
                s[(col, row)] += 0.5;
                s
            }
        }
    }

    /// Inverse of [`theta_to_q`] on matrices the parameterization can represent.
    pub fn extract(&self, q: &Matrix) -> CostParams {
        match self {
            Self::Scale { base } => {
                let (k, _) = base
                    .diagonal()
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if *v > acc.1 { (k, *v) } else { acc });
                CostParams::from_slice(&[q[(k, k)] / base[(k, k)]])
            }
            Self::Diagonal { .. } => CostParams::new(q.diagonal()),
            Self::Full { dim } => CostParams::new(Vector::from_column_slice(
                &q.as_slice()[..dim * dim],
            )),
        }
    }
}

/// `Q(θ)` for the given parameterization.
pub fn theta_to_q(param: &QParameterization, theta: &CostParams) -> Result<Matrix, GameError> {
    param.check(theta)?;
    let n = param.state_dim();
    Ok(match param {
        QParameterization::Scale { base } => base * theta.theta[0],
        QParameterization::Diagonal { .. } => Matrix::from_diagonal(&theta.theta),
        QParameterization::Full { .. } => {
            symmetrize(&Matrix::from_column_slice(n, n, theta.theta.as_slice()))
        }
    })
}

/// Projects θ onto the set where `Q(θ)` has every eigenvalue at least `epsilon`
/// (componentwise clamp for the scale and diagonal forms). Idempotent.
pub fn project_theta(param: &QParameterization, theta: &CostParams, epsilon: f64) -> CostParams {
    match param {
        QParameterization::Scale { .. } | QParameterization::Diagonal { .. } => {
            CostParams::new(theta.theta.map(|v| if v >= epsilon { v } else { epsilon }))
        }
        QParameterization::Full { dim } => {
            let n = *dim;
            let m = symmetrize(&Matrix::from_column_slice(n, n, theta.theta.as_slice()));
            let eig = m.clone().symmetric_eigen();
            if eig.eigenvalues.iter().all(|v| *v >= epsilon) {
                return CostParams::new(Vector::from_column_slice(m.as_slice()));
            }
            let clipped = eig.eigenvalues.map(|v| if v >= epsilon { v } else { epsilon });
            let rebuilt = &eig.eigenvectors * Matrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            CostParams::new(Vector::from_column_slice(symmetrize(&rebuilt).as_slice()))
        }
    }
}

/// `u = −Bᵀ P x` (unit control weighting).
pub fn feedback_control(b: &Matrix, p: &Matrix, x: &Vector) -> Vector {
    -(b.transpose() * (p * x))
}

/// Integrates `ẋ = A x + B_i u_i + B_j u_j` over `dt` with both controls held
/// constant, using `substeps` classical Runge–Kutta steps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_segment(
    a: &Matrix,
    b_i: &Matrix,
    b_j: &Matrix,
    x: &Vector,
    u_i: &Vector,
    u_j: &Vector,
    dt: f64,
    substeps: usize,
) -> Result<Vector, GameError> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(GameError::InvalidArgument(format!(
            "dt = {dt}, substeps = {substeps}"
        )));
    }
    let forcing = b_i * u_i + b_j * u_j;
    let h = dt / substeps as f64;
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = a * &x + &forcing;
        let k2 = a * (&x + &k1 * (0.5 * h)) + &forcing;
        let k3 = a * (&x + &k2 * (0.5 * h)) + &forcing;
        let k4 = a * (&x + &k3 * h) + &forcing;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(GameError::NonFiniteState)
    }
}

fn controllable(a: &Matrix, b: &Matrix) -> bool {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = Matrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let max = sv.max();
    max > 0.0 && sv.iter().filter(|s| **s > 1e-8 * max).count() == n
}

/// The two-player game: shared dynamics, each agent's input matrix, true
/// state cost and cost parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub a: Matrix,
    pub b_i: Matrix,
    pub b_j: Matrix,
    pub q_i: Matrix,
    pub q_j: Matrix,
    pub param_i: QParameterization,
    pub param_j: QParameterization,
}

impl GameSpec {
    pub fn new(
        a: Matrix,
        b_i: Matrix,
        b_j: Matrix,
        q_i: Matrix,
        q_j: Matrix,
        param_i: QParameterization,
        param_j: QParameterization,
    ) -> Result<Self, GameError> {
        let n = a.nrows();
        if !a.is_square()
            || b_i.nrows() != n
            || b_j.nrows() != n
            || b_i.ncols() != b_j.ncols()
            || q_i.shape() != (n, n)
            || q_j.shape() != (n, n)
            || param_i.state_dim() != n
            || param_j.state_dim() != n
        {
            return Err(GameError::DimensionMismatch(format!(
                "A {:?}, B_i {:?}, B_j {:?}, Q_i {:?}, Q_j {:?}",
                a.shape(),
                b_i.shape(),
                b_j.shape(),
                q_i.shape(),
                q_j.shape()
            )));
        }
        let game = Self { a, b_i, b_j, q_i, q_j, param_i, param_j };
        for agent in [Agent::I, Agent::J] {
            let q = game.q(agent);
            if !riccati::is_symmetric(q, 1e-12) || symmetric_eigenvalues(q)[0] < -1e-10 {
                return Err(GameError::NotPsd(agent));
            }
            if !controllable(&game.a, game.b(agent)) {
                return Err(GameError::Uncontrollable(agent));
            }
            let param = game.param(agent);
            let rebuilt = theta_to_q(param, &param.extract(q))?;
            if (&rebuilt - q).amax() > 1e-12 * q.amax().max(1.0) {
                return Err(GameError::Unrepresentable(agent));
            }
        }
        Ok(game)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b_i.ncols()
    }

    pub fn b(&self, agent: Agent) -> &Matrix {
        match agent {
            Agent::I => &self.b_i,
            Agent::J => &self.b_j,
        }
    }

    pub fn q(&self, agent: Agent) -> &Matrix {
        match agent {
            Agent::I => &self.q_i,
            Agent::J => &self.q_j,
        }
    }

    pub fn param(&self, agent: Agent) -> &QParameterization {
        match agent {
            Agent::I => &self.param_i,
            Agent::J => &self.param_j,
        }
    }

    /// True parameter vector of `agent`'s cost.
    pub fn true_theta(&self, agent: Agent) -> CostParams {
        self.param(agent).extract(self.q(agent))
    }

    /// Coupled Nash pair for state costs `(q_i, q_j)`.
    pub fn solve_coupled(
        &self,
        q_i: &Matrix,
        q_j: &Matrix,
        opts: &SolverOptions,
        guess: Option<(&Matrix, &Matrix)>,
    ) -> Result<CoupledSolution, RiccatiError> {
        let spec = CoupledAreSpec {
            a: &self.a,
            b_i: &self.b_i,
            b_j: &self.b_j,
            q_i,
            q_j,
        };
        riccati::solve_coupled_are(&spec, opts, guess)
    }

    /// Nash pair at the true costs.
    pub fn nash(&self) -> Result<CoupledSolution, RiccatiError> {
        self.solve_coupled(&self.q_i, &self.q_j, &SolverOptions::default(), None)
    }

    pub fn step(
        &self,
        x: &Vector,
        u_i: &Vector,
        u_j: &Vector,
        dt: f64,
    ) -> Result<Vector, GameError> {
        simulate_segment(&self.a, &self.b_i, &self.b_j, x, u_i, u_j, dt, 1)
    }
}
