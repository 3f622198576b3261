use crate::lqgame::{Agent, CostParams};

use super::{RunResult, SimError};

/// Threshold used for the time-to-converge metric, in percent.
pub const CONVERGED_PCT: f64 = 10.0;

/// Estimation metrics for one true parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMetrics {
    /// `theta_<owner><index>`, 1-based.
    pub label: String,
    /// Agent whose cost this parameter belongs to (estimated by the other agent).
    pub owner: Agent,
    pub index: usize,
    pub true_value: f64,
    /// Population standard deviation of the percent error over all epochs.
    pub percent_error_std: f64,
    /// First time after which the percent error stays below 10%; `None` if never.
    pub time_to_10pct: Option<f64>,
    pub final_error_pct: f64,
}

/// `100·|θ̂ − θ|/|θ|` at every epoch.
pub fn percent_error_series(estimates: &[CostParams], index: usize, truth: f64) -> Vec<f64> {
    estimates
        .iter()
        .map(|est| 100.0 * (est.theta[index] - truth).abs() / truth.abs())
        .collect()
}

/// First grid time after the last epoch whose error is at or above `threshold`.
pub fn time_below(time: &[f64], errors: &[f64], threshold: f64) -> Option<f64> {
    match errors.iter().rposition(|e| !(*e < threshold)) {
        None => time.first().copied(),
        Some(last_bad) => time.get(last_bad + 1).copied(),
    }
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Metrics for every parameter of both agents, agent i's parameters first.
///
/// Agent i's parameters are scored on agent j's peer estimates and vice versa.
pub fn compute_metrics(
    result: &RunResult,
    truth_i: &CostParams,
    truth_j: &CostParams,
) -> Result<Vec<ParameterMetrics>, SimError> {
    let mut out = Vec::with_capacity(truth_i.len() + truth_j.len());
    for (owner, truth) in [(Agent::I, truth_i), (Agent::J, truth_j)] {
        let estimates = &result.estimates(owner.other()).theta_peer;
        for index in 0..truth.len() {
            let label = format!("theta_{owner}{}", index + 1);
            let true_value = truth.theta[index];
            if true_value == 0.0 {
                return Err(SimError::ZeroTrueParameter(label));
            }
            let errors = percent_error_series(estimates, index, true_value);
            let time_to_10pct = if result.status.is_diverged() {
                None
            } else {
                time_below(&result.time, &errors, CONVERGED_PCT)
            };
            out.push(ParameterMetrics {
                label,
                owner,
                index,
                true_value,
                percent_error_std: population_std(&errors),
                time_to_10pct,
                final_error_pct: errors.last().copied().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(out)
}
