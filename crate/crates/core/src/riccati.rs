//! Dense small-matrix solvers: continuous Lyapunov equations, single and
//! coupled algebraic Riccati equations, and Riccati sensitivities.
//!
//! Every Riccati equation in this crate has unit control weighting, so the
//! quadratic term is `P B Bᵀ P`.

use nalgebra::{DMatrix, DVector, LU};
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Dense real column vector used throughout the crate.
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, Error)]
pub enum RiccatiError {
    #[error("drift matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NonHurwitzDrift { abscissa: f64 },
    #[error("Lyapunov system is numerically singular")]
    SingularSystem,
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    #[error("coupled Riccati sweep did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<CoupledSolution>,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, RiccatiError>;

/// Tolerances and iteration caps for the solvers in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest accepted Frobenius residual of a single Riccati solve.
    pub are_tolerance: f64,
    pub newton_max_iter: usize,
    /// Target for the larger of the two coupled residuals.
    pub coupled_tolerance: f64,
    pub coupled_max_iter: usize,
    /// A matrix counts as Hurwitz when its spectral abscissa is below `-hurwitz_margin`.
    pub hurwitz_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            are_tolerance: 1e-9,
            newton_max_iter: 60,
            coupled_tolerance: 1e-10,
            coupled_max_iter: 500,
            hurwitz_margin: 1e-12,
        }
    }
}

/// One algebraic Riccati equation `Dᵀ P + P D − P B Bᵀ P + Q = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreSpec {
    /// Effective drift `D`, possibly already containing a peer coupling term.
    pub drift: Matrix,
    pub input: Matrix,
    pub state_cost: Matrix,
}

impl AreSpec {
    pub fn new(drift: Matrix, input: Matrix, state_cost: Matrix) -> Result<Self> {
        let n = drift.nrows();
        if drift.ncols() != n || input.nrows() != n || state_cost.shape() != (n, n) {
            return Err(RiccatiError::DimensionMismatch(format!(
                "drift {:?}, input {:?}, state cost {:?}",
                drift.shape(),
                input.shape(),
                state_cost.shape()
            )));
        }
        if !is_symmetric(&state_cost, 1e-12) {
            return Err(RiccatiError::DimensionMismatch(
                "state cost is not symmetric".into(),
            ));
        }
        Ok(Self {
            drift,
            input,
            state_cost,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    /// `B Bᵀ`.
    pub fn gramian(&self) -> Matrix {
        &self.input * self.input.transpose()
    }

    pub fn residual(&self, p: &Matrix) -> Matrix {
        are_residual(&self.drift, &self.gramian(), &self.state_cost, p)
    }

    /// `D − B Bᵀ P`.
    pub fn closed_loop(&self, p: &Matrix) -> Matrix {
        &self.drift - self.gramian() * p
    }
}

/// Stabilizing solution of an [`AreSpec`] together with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: Matrix,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual_norm: f64,
    /// Largest real part among the eigenvalues of the closed loop.
    pub closed_loop_abscissa: f64,
}

/// Solution pair of the two coupled Nash Riccati equations.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub p_i: RiccatiSolution,
    pub p_j: RiccatiSolution,
    pub iterations: usize,
}

impl CoupledSolution {
    pub fn max_residual(&self) -> f64 {
        self.p_i.residual_norm.max(self.p_j.residual_norm)
    }
}

/// The two-player coupled system: dynamics, both inputs and both state costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledAreSpec<'a> {
    pub a: &'a Matrix,
    pub b_i: &'a Matrix,
    pub b_j: &'a Matrix,
    pub q_i: &'a Matrix,
    pub q_j: &'a Matrix,
}

impl CoupledAreSpec<'_> {
    /// Residuals of both coupled equations at `(p_i, p_j)`.
    pub fn residuals(&self, p_i: &Matrix, p_j: &Matrix) -> (Matrix, Matrix) {
        let g_i = self.b_i * self.b_i.transpose();
        let g_j = self.b_j * self.b_j.transpose();
        let r_i = are_residual(&(self.a - &g_j * p_j), &g_i, self.q_i, p_i);
        let r_j = are_residual(&(self.a - &g_i * p_i), &g_j, self.q_j, p_j);
        (r_i, r_j)
    }

    /// `A − B_i B_iᵀ P_i − B_j B_jᵀ P_j`.
    pub fn joint_closed_loop(&self, p_i: &Matrix, p_j: &Matrix) -> Matrix {
        self.a - self.b_i * (self.b_i.transpose() * p_i) - self.b_j * (self.b_j.transpose() * p_j)
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Largest real part of the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    match m.nrows() {
        0 => f64::NEG_INFINITY,
        1 => m[(0, 0)],
        _ => {
            if !m.iter().all(|v| v.is_finite()) {
                return f64::NAN;
            }
            m.clone()
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `Dᵀ P + P D − P G P + Q`.
pub fn are_residual(drift: &Matrix, gramian: &Matrix, q: &Matrix, p: &Matrix) -> Matrix {
    let pd = p * drift;
    pd.transpose() + pd - p * gramian * p + q
}

/// Factored Kronecker form of the Lyapunov operator `X ↦ Dᵀ X + X D`.
///
/// One factorization serves any number of right-hand sides, which is how the
/// sensitivity computations reuse it across parameters.
pub struct LyapunovOperator {
    n: usize,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LyapunovOperator {
    /// Factors the operator without checking that `drift` is Hurwitz.
    pub fn new_unchecked(drift: &Matrix) -> Result<Self> {
        let n = drift.nrows();
        if drift.ncols() != n {
            return Err(RiccatiError::DimensionMismatch(format!(
                "drift must be square, got {:?}",
                drift.shape()
            )));
        }
        let nn = n * n;
        // vec(Dᵀ X) = (I ⊗ Dᵀ) vec X and vec(X D) = (Dᵀ ⊗ I) vec X, column-major.
        let mut kron = Matrix::zeros(nn, nn);
        for j in 0..n {
            for i in 0..n {
                let row = j * n + i;
                for k in 0..n {
                    kron[(row, j * n + k)] += drift[(k, i)];
                    kron[(row, k * n + i)] += drift[(k, j)];
                }
            }
        }
        let lu = kron.lu();
        let u = lu.u();
        let diag = u.diagonal();
        let max = diag.amax();
        let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if !(max.is_finite() && max > 0.0) || min <= 1e-14 * max {
            return Err(RiccatiError::SingularSystem);
        }
        Ok(Self { n, lu })
    }

    /// Checks the Hurwitz precondition, then factors.
    pub fn new(drift: &Matrix, margin: f64) -> Result<Self> {
        let abscissa = spectral_abscissa(drift);
        if !(abscissa < -margin) {
            return Err(RiccatiError::NonHurwitzDrift { abscissa });
        }
        Self::new_unchecked(drift)
    }

    /// Solves `Dᵀ X + X D + rhs = 0`, returning the symmetrized `X`.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.n;
        if rhs.shape() != (n, n) {
            return Err(RiccatiError::DimensionMismatch(format!(
                "rhs {:?} for a {n}x{n} operator",
                rhs.shape()
            )));
        }
        let b = Vector::from_iterator(n * n, rhs.iter().map(|v| -v));
        let x = self.lu.solve(&b).ok_or(RiccatiError::SingularSystem)?;
        Ok(symmetrize(&Matrix::from_column_slice(n, n, x.as_slice())))
    }
}

/// Solves `driftᵀ X + X drift + rhs = 0` for a Hurwitz `drift`.
pub fn solve_lyapunov(drift: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    LyapunovOperator::new(drift, SolverOptions::default().hurwitz_margin)?.solve(rhs)
}

/// Stabilizing solution of a single algebraic Riccati equation.
pub fn solve_are(spec: &AreSpec) -> Result<RiccatiSolution> {
    solve_are_with(spec, &SolverOptions::default(), None)
}

/// [`solve_are`] with explicit options and an optional warm start.
///
/// A warm start is only used when it stabilizes the closed loop; otherwise
/// the initial gain comes from the Hamiltonian stable subspace, and failing
/// that from a shifted Lyapunov equation.
pub fn solve_are_with(
    spec: &AreSpec,
    opts: &SolverOptions,
    guess: Option<&Matrix>,
) -> Result<RiccatiSolution> {
    let gramian = spec.gramian();
    let stabilizes = |p: &Matrix| spectral_abscissa(&(&spec.drift - &gramian * p)) < 0.0;

    if let Some(p0) = guess {
        if p0.shape() == spec.drift.shape() && p0.iter().all(|v| v.is_finite()) && stabilizes(p0) {
            if let Ok(sol) = newton_kleinman(spec, &gramian, p0.clone(), opts) {
                return Ok(sol);
            }
        }
    }

    let mut last_err = None;
    match hamiltonian_initial(spec, &gramian) {
        Ok(p0) if stabilizes(&p0) => match newton_kleinman(spec, &gramian, p0, opts) {
            Ok(sol) => return Ok(sol),
            Err(e) => last_err = Some(e),
        },
        Ok(_) => {}
        Err(e) => last_err = Some(e),
    }
    match shifted_lyapunov_initial(spec, &gramian) {
        Ok(p0) if stabilizes(&p0) => newton_kleinman(spec, &gramian, p0, opts),
        _ => Err(last_err.unwrap_or_else(|| {
            RiccatiError::NoStabilizingSolution("no stabilizing initial gain found".into())
        })),
    }
}

fn newton_kleinman(
    spec: &AreSpec,
    gramian: &Matrix,
    mut p: Matrix,
    opts: &SolverOptions,
) -> Result<RiccatiSolution> {
    let q = &spec.state_cost;
    let mut best: Option<(f64, Matrix)> = None;
    for _ in 0..opts.newton_max_iter {
        let closed = &spec.drift - gramian * &p;
        let op = LyapunovOperator::new_unchecked(&closed)?;
        // Newton step in correction form: (D − GP)ᵀ Δ + Δ (D − GP) + R(P) = 0.
        let delta = op.solve(&are_residual(&spec.drift, gramian, q, &p))?;
        let step = delta.norm();
        p = symmetrize(&(p + delta));
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
        let res = are_residual(&spec.drift, gramian, q, &p).norm();
        if best.as_ref().map_or(true, |(r, _)| res < *r) {
            best = Some((res, p.clone()));
        }
        if step <= 1e-14 * (1.0 + p.norm()) || res <= 1e-14 * (1.0 + p.norm()) {
            break;
        }
    }
    let Some((residual_norm, p)) = best else {
        return Err(RiccatiError::NoStabilizingSolution(
            "Newton-Kleinman produced non-finite iterates".into(),
        ));
    };
    let abscissa = spectral_abscissa(&(&spec.drift - gramian * &p));
    if !(abscissa < 0.0) {
        return Err(RiccatiError::NoStabilizingSolution(format!(
            "closed-loop abscissa {abscissa:e}"
        )));
    }
    if !(residual_norm <= opts.are_tolerance * (1.0 + p.norm())) {
        return Err(RiccatiError::NoStabilizingSolution(format!(
            "residual {residual_norm:e} above tolerance"
        )));
    }
    Ok(RiccatiSolution {
        p,
        residual_norm,
        closed_loop_abscissa: abscissa,
    })
}

/// Riccati solution read off the stable invariant subspace of the
/// Hamiltonian, located with the scaled matrix sign function.
fn hamiltonian_initial(spec: &AreSpec, gramian: &Matrix) -> Result<Matrix> {
    let n = spec.dim();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&spec.drift);
    h.view_mut((0, n), (n, n)).copy_from(&(-gramian));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&spec.state_cost));
    h.view_mut((n, n), (n, n)).copy_from(&(-spec.drift.transpose()));

    let fail = || RiccatiError::NoStabilizingSolution("Hamiltonian has imaginary-axis eigenvalues".into());
    let mut z = h;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        let inv = lu.try_inverse().ok_or_else(fail)?;
        let c = (-log_det / (2 * n) as f64).exp();
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(fail());
        }
        if delta <= 1e-12 * z.norm() {
            break;
        }
    }
    // sign(H) [I; X] = −[I; X]  ⇒  [W12; W22 + I] X = −[W11 + I; W21]
    let mut lhs = Matrix::zeros(2 * n, n);
    let mut rhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + Matrix::identity(n, n)));
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + Matrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .map_err(|e| RiccatiError::NoStabilizingSolution(e.to_string()))?;
    Ok(symmetrize(&x))
}

/// Bass-style stabilizing initial guess: with `β` above the spectral
/// abscissa of `D`, `P₀ = Z⁻¹` where `(D + βI) Z + Z (D + βI)ᵀ = 2 B Bᵀ`.
fn shifted_lyapunov_initial(spec: &AreSpec, gramian: &Matrix) -> Result<Matrix> {
    let n = spec.dim();
    let beta = spec.drift.norm() + 1.0;
    let shifted = -(&spec.drift + Matrix::identity(n, n) * beta);
    let z = solve_lyapunov(&shifted.transpose(), &(gramian * 2.0))?;
    z.try_inverse()
        .map(|p| symmetrize(&p))
        .ok_or_else(|| RiccatiError::NoStabilizingSolution("uncontrollable pair".into()))
}

/// Sensitivity `∂P/∂θ` of a stabilizing solution in the direction `dq = ∂Q/∂θ`.
pub fn riccati_sensitivity(spec: &AreSpec, sol: &RiccatiSolution, dq: &Matrix) -> Result<Matrix> {
    solve_lyapunov(&spec.closed_loop(&sol.p), dq)
}

const STAGNATION_LIMIT: usize = 25;

/// Coupled Nash pair by alternating one-sided Riccati solves: agent `i`
/// against the current `P_j`, then agent `j` against the new `P_i`.
pub fn solve_coupled_are(
    spec: &CoupledAreSpec<'_>,
    opts: &SolverOptions,
    guess: Option<(&Matrix, &Matrix)>,
) -> Result<CoupledSolution> {
    let n = spec.a.nrows();
    for (name, m) in [("A", spec.a), ("Q_i", spec.q_i), ("Q_j", spec.q_j)] {
        if m.shape() != (n, n) {
            return Err(RiccatiError::DimensionMismatch(format!("{name} is {:?}", m.shape())));
        }
    }
    if spec.b_i.nrows() != n || spec.b_j.nrows() != n {
        return Err(RiccatiError::DimensionMismatch("input matrices".into()));
    }
    let g_i = spec.b_i * spec.b_i.transpose();
    let g_j = spec.b_j * spec.b_j.transpose();

    let (mut p_i, mut p_j) = match guess {
        Some((gi, gj)) => (gi.clone(), gj.clone()),
        None => (Matrix::zeros(n, n), Matrix::zeros(n, n)),
    };
    let mut have_pi = guess.is_some();
    let mut best: Option<CoupledSolution> = None;
    let mut since_best = 0usize;
    let mut iterations = 0usize;

    for iter in 1..=opts.coupled_max_iter {
        iterations = iter;
        let spec_i = AreSpec {
            drift: spec.a - &g_j * &p_j,
            input: spec.b_i.clone(),
            state_cost: spec.q_i.clone(),
        };
        p_i = solve_are_with(&spec_i, opts, have_pi.then_some(&p_i))?.p;
        have_pi = true;
        let spec_j = AreSpec {
            drift: spec.a - &g_i * &p_i,
            input: spec.b_j.clone(),
            state_cost: spec.q_j.clone(),
        };
        let warm = (iter > 1 || guess.is_some()).then_some(&p_j);
        p_j = solve_are_with(&spec_j, opts, warm)?.p;

        let (r_i, r_j) = spec.residuals(&p_i, &p_j);
        let abscissa = spectral_abscissa(&spec.joint_closed_loop(&p_i, &p_j));
        let candidate = CoupledSolution {
            p_i: RiccatiSolution {
                p: p_i.clone(),
                residual_norm: r_i.norm(),
                closed_loop_abscissa: abscissa,
            },
            p_j: RiccatiSolution {
                p: p_j.clone(),
                residual_norm: r_j.norm(),
                closed_loop_abscissa: abscissa,
            },
            iterations: iter,
        };
        let res = candidate.max_residual();
        if best.as_ref().map_or(true, |b| res < b.max_residual()) {
            best = Some(candidate);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let best_res = best.as_ref().map_or(f64::INFINITY, CoupledSolution::max_residual);
        // Once the sweep stops improving, accept a residual at the rounding
        // floor, which grows with the size of the equation terms.
        let scale = 1.0f64.max(spec.q_i.norm()).max(spec.q_j.norm());
        let stalled = since_best >= STAGNATION_LIMIT;
        if res < opts.coupled_tolerance || (stalled && best_res < opts.coupled_tolerance * scale) {
            let sol = best.expect("best iterate recorded");
            if !(sol.p_i.closed_loop_abscissa < 0.0) {
                return Err(RiccatiError::NoStabilizingSolution(
                    "coupled closed loop is not Hurwitz".into(),
                ));
            }
            return Ok(sol);
        }
        if !res.is_finite() || stalled {
            break;
        }
    }
    let best = best.ok_or_else(|| RiccatiError::NoStabilizingSolution("no iterate".into()))?;
    Err(RiccatiError::NoConvergence {
        iterations,
        residual: best.max_residual(),
        best: Box::new(best),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn lyapunov_identity_cases() {
        let x = solve_lyapunov(&(-Matrix::identity(2, 2)), &(Matrix::identity(2, 2) * 2.0)).unwrap();
        assert_abs_diff_eq!(x, Matrix::identity(2, 2), epsilon = 1e-14);
        let x = solve_lyapunov(&(-Matrix::identity(3, 3)), &Matrix::zeros(3, 3)).unwrap();
        assert_abs_diff_eq!(x, Matrix::zeros(3, 3), epsilon = 0.0);
    }

    #[test]
    fn lyapunov_rejects_unstable_drift() {
        let err = solve_lyapunov(&Matrix::identity(2, 2), &Matrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, RiccatiError::NonHurwitzDrift { .. }));
        // marginally stable
        let err = solve_lyapunov(&Matrix::zeros(1, 1), &scalar(1.0)).unwrap_err();
        assert!(matches!(err, RiccatiError::NonHurwitzDrift { .. }));
    }

    #[test]
    fn scalar_are_closed_form() {
        for (a, q) in [(0.0, 1.0), (1.0, 1.0), (-2.0, 0.5), (3.0, 7.0)] {
            let spec = AreSpec::new(scalar(a), scalar(1.0), scalar(q)).unwrap();
            let sol = solve_are(&spec).unwrap();
            let expected: f64 = a + (a * a + q).sqrt();
            assert!((sol.p[(0, 0)] - expected).abs() < 1e-12, "a={a} q={q}");
            assert!(sol.closed_loop_abscissa < 0.0);
        }
    }

    #[test]
    fn warm_start_that_destabilizes_is_ignored() {
        let spec = AreSpec::new(scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let sol = solve_are_with(&spec, &SolverOptions::default(), Some(&scalar(-5.0))).unwrap();
        assert!((sol.p[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn uncontrollable_unstable_mode_has_no_solution() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let spec = AreSpec::new(a, b, Matrix::identity(2, 2)).unwrap();
        assert!(solve_are(&spec).is_err());
    }

    #[test]
    fn sensitivity_scalar_closed_form() {
        let spec = AreSpec::new(scalar(0.0), scalar(1.0), scalar(1.0)).unwrap();
        let sol = solve_are(&spec).unwrap();
        let d = riccati_sensitivity(&spec, &sol, &scalar(1.0)).unwrap();
        assert!((d[(0, 0)] - 0.5).abs() < 1e-14);
        let zero = riccati_sensitivity(&spec, &sol, &scalar(0.0)).unwrap();
        assert_eq!(zero[(0, 0)], 0.0);
    }

    #[test]
    fn coupled_symmetric_scalar_game() {
        let (a, b, q) = (scalar(0.0), scalar(1.0), scalar(3.0));
        let spec = CoupledAreSpec { a: &a, b_i: &b, b_j: &b, q_i: &q, q_j: &q };
        let sol = solve_coupled_are(&spec, &SolverOptions::default(), None).unwrap();
        assert!((sol.p_i.p[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((sol.p_j.p[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coupled_with_silent_peer_decouples() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.3]);
        let b_i = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let b_j = Matrix::zeros(2, 1);
        let q_i = Matrix::identity(2, 2);
        let q_j = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5]));
        let spec = CoupledAreSpec { a: &a, b_i: &b_i, b_j: &b_j, q_i: &q_i, q_j: &q_j };
        let sol = solve_coupled_are(&spec, &SolverOptions::default(), None).unwrap();
        let single = solve_are(&AreSpec::new(a.clone(), b_i.clone(), q_i.clone()).unwrap()).unwrap();
        assert_abs_diff_eq!(sol.p_i.p, single.p, epsilon = 1e-10);
        let closed = &a - &b_i * b_i.transpose() * &single.p;
        let lyap = solve_lyapunov(&closed, &q_j).unwrap();
        assert_abs_diff_eq!(sol.p_j.p, lyap, epsilon = 1e-10);
    }
}
