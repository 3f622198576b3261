use crate::lqgame::{Agent, CostParams};
use crate::pace::{Learner, StepEvent};
use crate::riccati::Vector;

use super::{ScenarioSpec, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Stable,
    /// Run halted at this time.
    Diverged { time: f64 },
}

impl RunStatus {
    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Stable => "stable",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

/// A solver event captured during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEvent {
    pub time: f64,
    pub agent: Option<Agent>,
    pub message: String,
}

/// Per-agent estimate series over the time grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateTrace {
    /// Estimate of the peer's parameters after each epoch's update.
    pub theta_peer: Vec<CostParams>,
    /// Estimate of the peer's estimate of the agent's own parameters.
    pub theta_self: Vec<CostParams>,
}

/// Full closed-loop trace. Every series is indexed by `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub time: Vec<f64>,
    pub states: Vec<Vector>,
    pub u_i: Vec<Vector>,
    pub u_j: Vec<Vector>,
    /// Agent i's control as predicted by agent j.
    pub u_i_predicted_by_j: Vec<Option<Vector>>,
    /// Agent j's control as predicted by agent i.
    pub u_j_predicted_by_i: Vec<Option<Vector>>,
    pub estimates_i: EstimateTrace,
    pub estimates_j: EstimateTrace,
    pub status: RunStatus,
    pub events: Vec<RunEvent>,
}

impl RunResult {
    fn with_capacity(len: usize) -> Self {
        Self {
            time: Vec::with_capacity(len),
            states: Vec::with_capacity(len),
            u_i: Vec::with_capacity(len),
            u_j: Vec::with_capacity(len),
            u_i_predicted_by_j: Vec::with_capacity(len),
            u_j_predicted_by_i: Vec::with_capacity(len),
            estimates_i: EstimateTrace::default(),
            estimates_j: EstimateTrace::default(),
            status: RunStatus::Stable,
            events: Vec::new(),
        }
    }

    pub fn estimates(&self, agent: Agent) -> &EstimateTrace {
        match agent {
            Agent::I => &self.estimates_i,
            Agent::J => &self.estimates_j,
        }
    }

    pub fn final_time(&self) -> f64 {
        self.time.last().copied().unwrap_or(0.0)
    }
}

fn event_message(event: &StepEvent) -> String {
    match event {
        StepEvent::UpdateRejected(msg) => format!("update rejected: {msg}"),
        StepEvent::PredictionKept(msg) => format!("coupled prediction failed, previous pair kept: {msg}"),
    }
}

/// Runs both learners against the shared dynamics for the scenario duration.
///
/// Each epoch: apply scheduled reference jumps, observe, both agents act and
/// record, both agents update beliefs and policies, then the true dynamics
/// advance one interval under the applied controls.
pub fn run_closed_loop(scenario: &ScenarioSpec) -> Result<RunResult, SimError> {
    scenario.validate()?;
    let game = &scenario.game;
    let init = |agent: Agent| {
        let (config, beliefs) = match agent {
            Agent::I => (scenario.learner_i, &scenario.init_i),
            Agent::J => (scenario.learner_j, &scenario.init_j),
        };
        Learner::new(game, agent, config, beliefs.theta_peer.clone(), beliefs.theta_self.clone())
            .map_err(|e| SimError::InfeasibleInitialization(format!("agent {agent}: {e}")))
    };
    let mut learner_i = init(Agent::I)?;
    let mut learner_j = init(Agent::J)?;

    let steps = scenario.steps();
    let mut result = RunResult::with_capacity(steps + 1);
    let mut schedule = scenario.reference_schedule.iter().peekable();
    let mut x = scenario.x0.clone();

    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let mut offset: Option<Vector> = None;
        while let Some(jump) = schedule.next_if(|j| j.time <= t + 1e-9 * scenario.dt) {
            x += &jump.offset;
            offset = Some(match offset {
                Some(o) => o + &jump.offset,
                None => jump.offset.clone(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) || x.norm() > scenario.divergence_threshold {
            result.status = RunStatus::Diverged { time: t };
            break;
        }

        let observed = learner_i
            .observe(game, t, &x, offset.clone())
            .and_then(|u_i| learner_j.observe(game, t, &x, offset).map(|u_j| (u_i, u_j)));
        let (u_i, u_j) = observed.map_err(|e| SimError::Internal(e.to_string()))?;

        let mut diverged = false;
        let mut predictions = [None, None];
        for (slot, learner) in [&mut learner_i, &mut learner_j].into_iter().enumerate() {
            let agent = learner.agent();
            match learner.update(game) {
                Ok(update) => {
                    predictions[slot] = update.predicted_peer_control;
                    result.events.extend(update.events.iter().map(|e| RunEvent {
                        time: t,
                        agent: Some(agent),
                        message: event_message(e),
                    }));
                }
                Err(e) => {
                    result.events.push(RunEvent {
                        time: t,
                        agent: Some(agent),
                        message: format!("policy update failed: {e}"),
                    });
                    diverged = true;
                }
            }
        }

        result.time.push(t);
        result.states.push(x.clone());
        result.u_i.push(u_i.clone());
        result.u_j.push(u_j.clone());
        let [pred_j_by_i, pred_i_by_j] = predictions;
        result.u_j_predicted_by_i.push(pred_j_by_i);
        result.u_i_predicted_by_j.push(pred_i_by_j);
        for (trace, learner) in [
            (&mut result.estimates_i, &learner_i),
            (&mut result.estimates_j, &learner_j),
        ] {
            trace.theta_peer.push(learner.beliefs().theta_peer.clone());
            trace.theta_self.push(learner.beliefs().theta_self.clone());
        }

        if diverged {
            result.status = RunStatus::Diverged { time: t };
            break;
        }
        if k == steps {
            break;
        }
        match game.step(&x, &u_i, &u_j, scenario.dt) {
            Ok(next) => x = next,
            Err(e) => {
                result.events.push(RunEvent {
                    time: t,
                    agent: None,
                    message: e.to_string(),
                });
                result.status = RunStatus::Diverged { time: t + scenario.dt };
                break;
            }
        }
    }
    Ok(result)
}
