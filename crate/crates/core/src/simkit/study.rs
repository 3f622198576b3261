use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::lqgame::{Agent, CostParams};

use super::{compute_metrics, run_closed_loop, InitialBeliefs, ParameterMetrics, RunStatus, ScenarioSpec, SimError};

/// Final percent error at or below which a parameter counts as recovered.
pub const CONVERGED_FINAL_PCT: f64 = 20.0;

/// Deterministic per-run generator: ChaCha8 seeded with `seed + run`.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64))
}

/// Uniform draw on `[lo, hi)` from the top 53 bits of one 64-bit output.
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * unit
}

/// Which initial estimates a Monte Carlo run randomizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitSampling {
    /// One draw per agent's parameter vector, shared by both agents.
    #[default]
    Shared,
    /// Independent draws for all four estimates.
    Independent,
}

impl InitSampling {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Shared => "shared",
            Self::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub n_runs: usize,
    pub init_range: (f64, f64),
    pub seed: u64,
    pub sampling: InitSampling,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let (lo, hi) = self.init_range;
        if self.n_runs == 0 {
            return Err(SimError::InvalidScenario("n_runs must be at least 1".into()));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SimError::InvalidScenario(format!("init range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Outcome of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub init_i: InitialBeliefs,
    pub init_j: InitialBeliefs,
    pub status: RunStatus,
    pub metrics: Vec<ParameterMetrics>,
    pub converged: bool,
    /// Solver events logged during the run, or the reason the run could not start.
    pub events: Vec<String>,
}

impl RunRecord {
    pub fn max_final_error(&self) -> f64 {
        self.metrics.iter().map(|m| m.final_error_pct).fold(f64::NAN, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub n_runs: usize,
    pub converged_fraction: f64,
    pub diverged_fraction: f64,
    /// Mean final percent error over every parameter of every stable run.
    pub mean_final_error_pct: f64,
    /// Largest final percent error over every parameter of every stable run.
    pub max_final_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub summary: MonteCarloSummary,
    pub runs: Vec<RunRecord>,
}

fn draw(rng: &mut ChaCha8Rng, len: usize, (lo, hi): (f64, f64)) -> CostParams {
    CostParams::new(crate::Vector::from_fn(len, |_, _| uniform(rng, lo, hi)))
}

/// Initial beliefs of both agents for run `run`.
pub fn sample_initial_beliefs(
    template: &ScenarioSpec,
    config: &MonteCarloConfig,
    run: usize,
) -> (InitialBeliefs, InitialBeliefs) {
    let mut rng = run_rng(config.seed, run);
    let n_i = template.game.param(Agent::I).num_params();
    let n_j = template.game.param(Agent::J).num_params();
    match config.sampling {
        InitSampling::Shared => {
            let theta_i = draw(&mut rng, n_i, config.init_range);
            let theta_j = draw(&mut rng, n_j, config.init_range);
            InitialBeliefs::shared(&theta_i, &theta_j)
        }
        InitSampling::Independent => {
            let i_peer = draw(&mut rng, n_j, config.init_range);
            let i_self = draw(&mut rng, n_i, config.init_range);
            let j_peer = draw(&mut rng, n_i, config.init_range);
            let j_self = draw(&mut rng, n_j, config.init_range);
            (
                InitialBeliefs { theta_peer: i_peer, theta_self: i_self },
                InitialBeliefs { theta_peer: j_peer, theta_self: j_self },
            )
        }
    }
}

/// True when the run stayed stable and every estimated parameter ends within
/// `pct` percent of its true value.
pub fn converged_within(status: &RunStatus, metrics: &[ParameterMetrics], pct: f64) -> bool {
    !status.is_diverged() && metrics.iter().all(|m| m.final_error_pct <= pct)
}

fn run_one(template: &ScenarioSpec, config: &MonteCarloConfig, run: usize) -> Result<RunRecord, SimError> {
    let (init_i, init_j) = sample_initial_beliefs(template, config, run);
    let mut spec = template.clone();
    spec.init_i = init_i.clone();
    spec.init_j = init_j.clone();
    let truth_i = spec.game.true_theta(Agent::I);
    let truth_j = spec.game.true_theta(Agent::J);
    let seed = config.seed.wrapping_add(run as u64);
    match run_closed_loop(&spec) {
        Ok(result) => {
            let metrics = compute_metrics(&result, &truth_i, &truth_j)?;
            Ok(RunRecord {
                run,
                seed,
                init_i,
                init_j,
                status: result.status,
                converged: converged_within(&result.status, &metrics, CONVERGED_FINAL_PCT),
                metrics,
                events: result.events.into_iter().map(|e| e.message).collect(),
            })
        }
        // Initial beliefs with no stabilizing coupled solution count as a
        // failed run at t = 0.
        Err(SimError::InfeasibleInitialization(msg)) => Ok(RunRecord {
            run,
            seed,
            init_i,
            init_j,
            status: RunStatus::Diverged { time: 0.0 },
            metrics: Vec::new(),
            converged: false,
            events: vec![format!("infeasible initialization: {msg}")],
        }),
        Err(e) => Err(e),
    }
}

fn summarize(runs: &[RunRecord]) -> MonteCarloSummary {
    let n = runs.len() as f64;
    let finals: Vec<f64> = runs
        .iter()
        .filter(|r| !r.status.is_diverged())
        .flat_map(|r| r.metrics.iter().map(|m| m.final_error_pct))
        .collect();
    let (mean, max) = if finals.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            finals.iter().sum::<f64>() / finals.len() as f64,
            finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    MonteCarloSummary {
        n_runs: runs.len(),
        converged_fraction: runs.iter().filter(|r| r.converged).count() as f64 / n,
        diverged_fraction: runs.iter().filter(|r| r.status.is_diverged()).count() as f64 / n,
        mean_final_error_pct: mean,
        max_final_error_pct: max,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Internal(e.to_string()))
}

/// Runs `config.n_runs` independent closed loops from random initial
/// estimates on up to `workers` threads. Records come back in run order.
pub fn monte_carlo(template: &ScenarioSpec, config: &MonteCarloConfig, workers: usize) -> Result<MonteCarloReport, SimError> {
    config.validate()?;
    template.validate()?;
    let runs = pool(workers)?.install(|| {
        (0..config.n_runs)
            .into_par_iter()
            .map(|run| run_one(template, config, run))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(MonteCarloReport {
        summary: summarize(&runs),
        runs,
    })
}

/// Convergence test used by [`stability_boundary_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCriteria {
    pub converged_final_pct: f64,
}

impl Default for BoundaryCriteria {
    fn default() -> Self {
        Self {
            converged_final_pct: CONVERGED_FINAL_PCT,
        }
    }
}

/// First grid points meeting each criterion for one history size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryRow {
    pub capacity: usize,
    pub alpha_convergence: Option<f64>,
    pub alpha_stability: Option<f64>,
}

/// For every history size, ascends the learning-rate grid and records the
/// first rate that converges and the first that diverges. The ascent for a
/// history size stops at its first divergence.
pub fn stability_boundary_sweep(
    template: &ScenarioSpec,
    capacities: &[usize],
    alpha_grid: &[f64],
    criteria: &BoundaryCriteria,
    workers: usize,
) -> Result<Vec<BoundaryRow>, SimError> {
    if capacities.is_empty() || alpha_grid.is_empty() {
        return Err(SimError::InvalidScenario("empty history-size list or alpha grid".into()));
    }
    if alpha_grid.windows(2).any(|w| !(w[0] < w[1])) || !(alpha_grid[0] > 0.0) {
        return Err(SimError::InvalidScenario("alpha grid must be positive and strictly increasing".into()));
    }
    template.validate()?;
    let truth_i = template.game.true_theta(Agent::I);
    let truth_j = template.game.true_theta(Agent::J);
    let sweep_one = |capacity: usize| -> Result<BoundaryRow, SimError> {
        let mut row = BoundaryRow {
            capacity,
            alpha_convergence: None,
            alpha_stability: None,
        };
        for &alpha in alpha_grid {
            let spec = template.clone().with_capacity(capacity).with_alpha(alpha);
            let status = match run_closed_loop(&spec) {
                Ok(result) => {
                    let metrics = compute_metrics(&result, &truth_i, &truth_j)?;
                    if row.alpha_convergence.is_none()
                        && converged_within(&result.status, &metrics, criteria.converged_final_pct)
                    {
                        row.alpha_convergence = Some(alpha);
                    }
                    result.status
                }
                Err(SimError::InfeasibleInitialization(_)) => RunStatus::Diverged { time: 0.0 },
                Err(e) => return Err(e),
            };
            if status.is_diverged() {
                row.alpha_stability = Some(alpha);
                break;
            }
        }
        Ok(row)
    };
    pool(workers)?.install(|| capacities.par_iter().map(|&n| sweep_one(n)).collect())
}
