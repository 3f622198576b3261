//! The four subcommands. Each validates its whole configuration before any
//! computation and computes everything before touching the output directory,
//! so failures leave no partial artifacts behind.

use std::path::Path;

use pace_core::riccati::{solve_coupled_are, CoupledAreSpec, CoupledSolution};
use pace_core::simkit::{
    compute_metrics, monte_carlo, run_closed_loop, stability_boundary_sweep, BoundaryCriteria, BoundaryRow,
    MonteCarloConfig, MonteCarloReport, RunResult, ScenarioSpec, SimError,
};
use pace_core::{Agent, CostParams, Matrix};

use crate::config::{matrix_from_rows, CliOverrides, ExperimentConfig, ModeName};
use crate::output::{float, header, opt_float, write_csv, write_manifest, Manifest, ManifestEvent};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Simulate,
    Montecarlo,
    Boundary,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Montecarlo => "montecarlo",
            Command::Boundary => "boundary",
        }
    }
}

/// Loads the config at `config_path`, applies the command-line overrides and
/// runs `command`, writing its artifacts into `out`.
pub fn run(command: Command, config_path: &Path, out: &Path, cli: &CliOverrides) -> Result<Manifest, CliError> {
    let config = ExperimentConfig::load(config_path)?.apply(cli);
    let workers = worker_count()?;
    match command {
        Command::Solve => cmd_solve(&config, out),
        Command::Simulate => cmd_simulate(&config, out),
        Command::Montecarlo => cmd_montecarlo(&config, out, workers),
        Command::Boundary => cmd_boundary(&config, out, workers),
    }
}

/// Worker threads for parallel studies: `PACE_LQ_THREADS` if set, else the
/// machine's available parallelism.
pub fn worker_count() -> Result<usize, CliError> {
    match std::env::var("PACE_LQ_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("PACE_LQ_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::UnknownScenario(_) | SimError::InvalidScenario(_) | SimError::ZeroTrueParameter(_) => {
            CliError::Config(e.to_string())
        }
        SimError::InfeasibleInitialization(_) | SimError::Internal(_) => CliError::Numerical(e.to_string()),
    }
}

fn manifest(config: &ExperimentConfig, command: Command, status: &str, outputs: &[&str]) -> Manifest {
    Manifest {
        command: command.as_str().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
        seed: config.seed,
        status: status.into(),
        diverged_time: None,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        events: Vec::new(),
    }
}

fn mode_label(mode: ModeName) -> &'static str {
    match mode {
        ModeName::Pace => "pace",
        ModeName::PeerOptimal => "peer-optimal",
    }
}

struct GameMatrices {
    a: Matrix,
    b_i: Matrix,
    b_j: Matrix,
    q_i: Matrix,
    q_j: Matrix,
}

fn game_matrices(config: &ExperimentConfig) -> Result<GameMatrices, CliError> {
    let Some(g) = &config.game else {
        let game = config.scenario()?.game;
        return Ok(GameMatrices {
            a: game.a,
            b_i: game.b_i,
            b_j: game.b_j,
            q_i: game.q_i,
            q_j: game.q_j,
        });
    };
    let m = GameMatrices {
        a: matrix_from_rows(&g.a, "a")?,
        b_i: matrix_from_rows(&g.b_i, "b_i")?,
        b_j: matrix_from_rows(&g.b_j, "b_j")?,
        q_i: matrix_from_rows(&g.q_i, "q_i")?,
        q_j: matrix_from_rows(&g.q_j, "q_j")?,
    };
    let n = m.a.nrows();
    if !m.a.is_square() {
        return Err(CliError::Config("game.a must be square".into()));
    }
    if m.b_i.nrows() != n || m.b_j.nrows() != n {
        return Err(CliError::Config(format!("game.b_i and game.b_j need {n} rows")));
    }
    for (name, q) in [("q_i", &m.q_i), ("q_j", &m.q_j)] {
        if q.shape() != (n, n) {
            return Err(CliError::Config(format!("game.{name} must be {n}x{n}")));
        }
        if !pace_core::riccati::is_symmetric(q, 1e-12) {
            return Err(CliError::Config(format!("game.{name} must be symmetric")));
        }
        if pace_core::riccati::symmetric_eigenvalues(q)[0] < -1e-10 {
            return Err(CliError::Config(format!("game.{name} must be positive semidefinite")));
        }
    }
    Ok(m)
}

/// Coupled Nash pair of the configured game, or of the scenario's true game
/// when no `[game]` section is given.
pub fn cmd_solve(config: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let g = game_matrices(config)?;
    let opts = config.solver_options()?;
    let spec = CoupledAreSpec {
        a: &g.a,
        b_i: &g.b_i,
        b_j: &g.b_j,
        q_i: &g.q_i,
        q_j: &g.q_j,
    };
    let sol: CoupledSolution = solve_coupled_are(&spec, &opts, None).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut eig: Vec<(f64, f64)> = spec
        .joint_closed_loop(&sol.p_i.p, &sol.p_j.p)
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let n = g.a.nrows();
    let mut rows = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            rows.push(vec![
                (r + 1).to_string(),
                (c + 1).to_string(),
                float(sol.p_i.p[(r, c)]),
                float(sol.p_j.p[(r, c)]),
                float(sol.p_i.residual_norm),
                float(sol.p_j.residual_norm),
            ]);
        }
    }
    let eig_rows: Vec<Vec<String>> = eig
        .iter()
        .enumerate()
        .map(|(k, (re, im))| vec![(k + 1).to_string(), float(*re), float(*im)])
        .collect();

    std::fs::create_dir_all(out)?;
    write_csv(out, "nash.csv", &header(&["row", "col", "p_i", "p_j", "residual_i", "residual_j"]), &rows)?;
    write_csv(out, "eigenvalues.csv", &header(&["index", "real", "imag"]), &eig_rows)?;
    let m = manifest(config, Command::Solve, "ok", &["nash.csv", "eigenvalues.csv"]);
    write_manifest(out, &m)?;
    Ok(m)
}

fn vector_columns(prefix: &str, len: usize) -> Vec<String> {
    if len == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=len).map(|k| format!("{prefix}{k}")).collect()
    }
}

fn theta_columns(prefix: &str, len: usize) -> Vec<String> {
    (1..=len).map(|k| format!("{prefix}{k}")).collect()
}

fn trajectory_rows(spec: &ScenarioSpec, result: &RunResult) -> (Vec<String>, Vec<Vec<String>>) {
    let n = spec.game.state_dim();
    let m = spec.game.control_dim();
    let mut head = vec!["t".to_string()];
    head.extend((1..=n).map(|k| format!("x{k}")));
    for prefix in ["u_i", "u_j", "u_i_predicted_by_j", "u_j_predicted_by_i"] {
        head.extend(vector_columns(prefix, m));
    }
    let rows = (0..result.time.len())
        .map(|k| {
            let mut row = vec![float(result.time[k])];
            row.extend(result.states[k].iter().map(|v| float(*v)));
            row.extend(result.u_i[k].iter().map(|v| float(*v)));
            row.extend(result.u_j[k].iter().map(|v| float(*v)));
            for pred in [&result.u_i_predicted_by_j[k], &result.u_j_predicted_by_i[k]] {
                match pred {
                    Some(u) => row.extend(u.iter().map(|v| float(*v))),
                    None => row.extend(std::iter::repeat_n(String::new(), m)),
                }
            }
            row
        })
        .collect();
    (head, rows)
}

fn estimate_rows(spec: &ScenarioSpec, result: &RunResult) -> (Vec<String>, Vec<Vec<String>>) {
    let truth_i = spec.game.true_theta(Agent::I);
    let truth_j = spec.game.true_theta(Agent::J);
    let (n_i, n_j) = (truth_i.len(), truth_j.len());
    let mut head = vec!["t".to_string()];
    head.extend(theta_columns("i_peer_", n_j));
    head.extend(theta_columns("i_self_", n_i));
    head.extend(theta_columns("j_peer_", n_i));
    head.extend(theta_columns("j_self_", n_j));
    head.extend(theta_columns("true_i_", n_i));
    head.extend(theta_columns("true_j_", n_j));
    let push = |row: &mut Vec<String>, theta: &CostParams| row.extend(theta.theta.iter().map(|v| float(*v)));
    let rows = (0..result.time.len())
        .map(|k| {
            let mut row = vec![float(result.time[k])];
            push(&mut row, &result.estimates_i.theta_peer[k]);
            push(&mut row, &result.estimates_i.theta_self[k]);
            push(&mut row, &result.estimates_j.theta_peer[k]);
            push(&mut row, &result.estimates_j.theta_self[k]);
            push(&mut row, &truth_i);
            push(&mut row, &truth_j);
            row
        })
        .collect();
    (head, rows)
}

/// One closed-loop run with full trajectory, estimate and metric output.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    let spec = config.scenario()?;
    let result = run_closed_loop(&spec).map_err(sim_error)?;
    let metrics = compute_metrics(&result, &spec.game.true_theta(Agent::I), &spec.game.true_theta(Agent::J))
        .map_err(sim_error)?;

    let (traj_head, traj_rows) = trajectory_rows(&spec, &result);
    let (est_head, est_rows) = estimate_rows(&spec, &result);
    let metric_rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|m| {
            vec![
                m.label.clone(),
                float(m.percent_error_std),
                opt_float(m.time_to_10pct),
                float(m.final_error_pct),
            ]
        })
        .collect();

    std::fs::create_dir_all(out)?;
    write_csv(out, "trajectory.csv", &traj_head, &traj_rows)?;
    write_csv(out, "estimates.csv", &est_head, &est_rows)?;
    write_csv(
        out,
        "metrics.csv",
        &header(&["parameter", "percent_error_std", "time_to_10pct", "final_error_pct"]),
        &metric_rows,
    )?;
    let mut m = manifest(
        config,
        Command::Simulate,
        result.status.label(),
        &["trajectory.csv", "estimates.csv", "metrics.csv"],
    );
    if let pace_core::RunStatus::Diverged { time } = result.status {
        m.diverged_time = Some(time);
    }
    m.events = result
        .events
        .iter()
        .map(|e| ManifestEvent {
            time: Some(e.time),
            agent: e.agent.map(|a| a.to_string()),
            message: e.message.clone(),
        })
        .collect();
    write_manifest(out, &m)?;
    Ok(m)
}

fn runs_header(template: &ScenarioSpec) -> Vec<String> {
    let n_i = template.game.param(Agent::I).num_params();
    let n_j = template.game.param(Agent::J).num_params();
    let mut head = header(&["mode", "run", "seed"]);
    head.extend(theta_columns("init_i_peer_", n_j));
    head.extend(theta_columns("init_i_self_", n_i));
    head.extend(theta_columns("init_j_peer_", n_i));
    head.extend(theta_columns("init_j_self_", n_j));
    head.extend(header(&["status", "diverged_time"]));
    head.extend(theta_columns("final_error_pct_theta_i", n_i));
    head.extend(theta_columns("final_error_pct_theta_j", n_j));
    head.push("converged".into());
    head
}

fn runs_rows(mode: ModeName, template: &ScenarioSpec, report: &MonteCarloReport) -> Vec<Vec<String>> {
    let n_params = template.game.param(Agent::I).num_params() + template.game.param(Agent::J).num_params();
    report
        .runs
        .iter()
        .map(|r| {
            let mut row = vec![mode_label(mode).to_string(), r.run.to_string(), r.seed.to_string()];
            for theta in [
                &r.init_i.theta_peer,
                &r.init_i.theta_self,
                &r.init_j.theta_peer,
                &r.init_j.theta_self,
            ] {
                row.extend(theta.theta.iter().map(|v| float(*v)));
            }
            row.push(r.status.label().into());
            row.push(match r.status {
                pace_core::RunStatus::Diverged { time } => float(time),
                pace_core::RunStatus::Stable => String::new(),
            });
            if r.metrics.is_empty() {
                row.extend(std::iter::repeat_n(String::new(), n_params));
            } else {
                row.extend(r.metrics.iter().map(|m| float(m.final_error_pct)));
            }
            row.push(r.converged.to_string());
            row
        })
        .collect()
}

/// Randomized initial-estimate study for every configured learner mode.
pub fn cmd_montecarlo(config: &ExperimentConfig, out: &Path, workers: usize) -> Result<Manifest, CliError> {
    let mc = config.montecarlo_section()?;
    let base = config.scenario()?;
    let mc_config = MonteCarloConfig {
        n_runs: mc.n_runs,
        init_range: (mc.init_range[0], mc.init_range[1]),
        seed: config.seed,
        sampling: mc.sampling.into(),
    };

    let mut summary_rows = Vec::new();
    let mut run_rows = Vec::new();
    let mut events = Vec::new();
    for &mode in &mc.modes {
        let template = base.clone().with_mode(mode.into());
        let report = monte_carlo(&template, &mc_config, workers).map_err(sim_error)?;
        let s = &report.summary;
        summary_rows.push(vec![
            mode_label(mode).to_string(),
            s.n_runs.to_string(),
            float(s.converged_fraction),
            float(s.diverged_fraction),
            float(s.mean_final_error_pct),
            float(s.max_final_error_pct),
        ]);
        run_rows.extend(runs_rows(mode, &template, &report));
        for r in report.runs.iter().filter(|r| !r.events.is_empty()) {
            events.push(ManifestEvent {
                time: None,
                agent: None,
                message: format!(
                    "{} run {}: {} solver events, first: {}",
                    mode_label(mode),
                    r.run,
                    r.events.len(),
                    r.events[0]
                ),
            });
        }
    }

    std::fs::create_dir_all(out)?;
    write_csv(
        out,
        "summary.csv",
        &header(&[
            "mode",
            "n_runs",
            "converged_fraction",
            "diverged_fraction",
            "mean_final_error_pct",
            "max_final_error_pct",
        ]),
        &summary_rows,
    )?;
    write_csv(out, "runs.csv", &runs_header(&base), &run_rows)?;
    let mut m = manifest(config, Command::Montecarlo, "ok", &["summary.csv", "runs.csv"]);
    m.events = events;
    write_manifest(out, &m)?;
    Ok(m)
}

/// Convergence and stability boundaries over history sizes and step sizes.
pub fn cmd_boundary(config: &ExperimentConfig, out: &Path, workers: usize) -> Result<Manifest, CliError> {
    let b = config.boundary_section()?;
    let base = config.scenario()?;
    let criteria = BoundaryCriteria {
        converged_final_pct: b.converged_final_pct,
    };
    let mut rows = Vec::new();
    for &mode in &b.modes {
        let template = base.clone().with_mode(mode.into());
        let table: Vec<BoundaryRow> =
            stability_boundary_sweep(&template, &b.n_values, &b.alpha_grid, &criteria, workers).map_err(sim_error)?;
        rows.extend(table.iter().map(|r| {
            vec![
                mode_label(mode).to_string(),
                r.capacity.to_string(),
                opt_float(r.alpha_convergence),
                opt_float(r.alpha_stability),
            ]
        }));
    }
    std::fs::create_dir_all(out)?;
    write_csv(
        out,
        "boundary.csv",
        &header(&["mode", "N", "alpha_convergence", "alpha_stability"]),
        &rows,
    )?;
    let m = manifest(config, Command::Boundary, "ok", &["boundary.csv"]);
    write_manifest(out, &m)?;
    Ok(m)
}
