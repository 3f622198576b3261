//! Experiment configuration files.

use std::path::Path;

use pace_core::simkit::{build_scenario, InitSampling, ScenarioName, ScenarioOverrides, ScenarioSpec};
use pace_core::{LearnerMode, Matrix, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Pace,
    PeerOptimal,
}

impl From<ModeName> for LearnerMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Pace => LearnerMode::Pace,
            ModeName::PeerOptimal => LearnerMode::PeerOptimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingName {
    #[default]
    Shared,
    Independent,
}

impl From<SamplingName> for InitSampling {
    fn from(s: SamplingName) -> Self {
        match s {
            SamplingName::Shared => InitSampling::Shared,
            SamplingName::Independent => InitSampling::Independent,
        }
    }
}

/// Scenario default replacements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridesSection {
    pub x0: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub alpha: Option<f64>,
    pub capacity: Option<usize>,
    pub mode_i: Option<ModeName>,
    pub mode_j: Option<ModeName>,
    pub initial_theta_i: Option<Vec<f64>>,
    pub initial_theta_j: Option<Vec<f64>>,
    pub divergence_threshold: Option<f64>,
    pub switch_period: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub are_tolerance: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub coupled_tolerance: Option<f64>,
    pub coupled_max_iter: Option<usize>,
}

/// Explicit game for `solve`; matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub a: Vec<Vec<f64>>,
    pub b_i: Vec<Vec<f64>>,
    pub b_j: Vec<Vec<f64>>,
    pub q_i: Vec<Vec<f64>>,
    pub q_j: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_init_range")]
    pub init_range: [f64; 2],
    #[serde(default)]
    pub sampling: SamplingName,
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            n_runs: default_runs(),
            init_range: default_init_range(),
            sampling: SamplingName::default(),
            modes: default_modes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub n_values: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
    #[serde(default = "default_converged_pct")]
    pub converged_final_pct: f64,
}

fn default_runs() -> usize {
    50
}

fn default_init_range() -> [f64; 2] {
    [0.0, 10.0]
}

fn default_modes() -> Vec<ModeName> {
    vec![ModeName::Pace, ModeName::PeerOptimal]
}

fn default_converged_pct() -> f64 {
    pace_core::simkit::CONVERGED_FINAL_PCT
}

/// Everything one invocation needs. Parsed from TOML; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub overrides: OverridesSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub game: Option<GameSection>,
    pub montecarlo: Option<MonteCarloSection>,
    pub boundary: Option<BoundarySection>,
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub mode: Option<ModeName>,
    pub runs: Option<usize>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Folds command-line flags into the config so that the hash covers them.
    pub fn apply(mut self, cli: &CliOverrides) -> Self {
        if let Some(seed) = cli.seed {
            self.seed = seed;
        }
        if let Some(mode) = cli.mode {
            self.overrides.mode_i = Some(mode);
            self.overrides.mode_j = Some(mode);
            if let Some(mc) = &mut self.montecarlo {
                mc.modes = vec![mode];
            }
            if let Some(b) = &mut self.boundary {
                b.modes = vec![mode];
            }
        }
        if let Some(runs) = cli.runs {
            self.montecarlo.get_or_insert_with(MonteCarloSection::default).n_runs = runs;
        }
        self
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn solver_options(&self) -> Result<SolverOptions, CliError> {
        let mut opts = SolverOptions::default();
        let s = &self.solver;
        if let Some(v) = s.are_tolerance {
            opts.are_tolerance = positive(v, "solver.are_tolerance")?;
        }
        if let Some(v) = s.coupled_tolerance {
            opts.coupled_tolerance = positive(v, "solver.coupled_tolerance")?;
        }
        if let Some(v) = s.newton_max_iter {
            opts.newton_max_iter = nonzero(v, "solver.newton_max_iter")?;
        }
        if let Some(v) = s.coupled_max_iter {
            opts.coupled_max_iter = nonzero(v, "solver.coupled_max_iter")?;
        }
        Ok(opts)
    }

    pub fn scenario_name(&self) -> Result<ScenarioName, CliError> {
        let name = self
            .scenario
            .as_deref()
            .ok_or_else(|| config_error("missing `scenario`"))?;
        name.parse().map_err(|e: pace_core::simkit::SimError| config_error(e.to_string()))
    }

    pub fn scenario_overrides(&self) -> ScenarioOverrides {
        let o = &self.overrides;
        ScenarioOverrides {
            x0: o.x0.clone(),
            dt: o.dt,
            duration: o.duration,
            alpha: o.alpha,
            capacity: o.capacity,
            mode_i: o.mode_i.map(Into::into),
            mode_j: o.mode_j.map(Into::into),
            initial_theta_i: o.initial_theta_i.clone(),
            initial_theta_j: o.initial_theta_j.clone(),
            divergence_threshold: o.divergence_threshold,
            switch_period: o.switch_period,
        }
    }

    /// The scenario with overrides and solver options applied.
    pub fn scenario(&self) -> Result<ScenarioSpec, CliError> {
        let name = self.scenario_name()?;
        let opts = self.solver_options()?;
        let mut spec = build_scenario(name, &self.scenario_overrides()).map_err(|e| config_error(e.to_string()))?;
        spec.learner_i.solver = opts;
        spec.learner_j.solver = opts;
        Ok(spec)
    }

    pub fn montecarlo_section(&self) -> Result<MonteCarloSection, CliError> {
        let mc = self.montecarlo.clone().unwrap_or_default();
        if mc.n_runs == 0 {
            return Err(config_error("montecarlo.n_runs must be at least 1"));
        }
        let [lo, hi] = mc.init_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(config_error(format!("montecarlo.init_range [{lo}, {hi}]")));
        }
        if mc.modes.is_empty() {
            return Err(config_error("montecarlo.modes is empty"));
        }
        Ok(mc)
    }

    pub fn boundary_section(&self) -> Result<BoundarySection, CliError> {
        let b = self
            .boundary
            .clone()
            .ok_or_else(|| config_error("missing [boundary] section"))?;
        if b.n_values.is_empty() || b.n_values.contains(&0) {
            return Err(config_error("boundary.n_values must be nonempty positive counts"));
        }
        if b.alpha_grid.is_empty()
            || b.alpha_grid.windows(2).any(|w| !(w[0] < w[1]))
            || !(b.alpha_grid[0] > 0.0)
        {
            return Err(config_error("boundary.alpha_grid must be positive and strictly increasing"));
        }
        if b.modes.is_empty() {
            return Err(config_error("boundary.modes is empty"));
        }
        if !(b.converged_final_pct > 0.0) {
            return Err(config_error("boundary.converged_final_pct must be positive"));
        }
        Ok(b)
    }
}

fn positive(v: f64, name: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_error(format!("{name} must be positive, got {v}")))
    }
}

fn nonzero(v: usize, name: &str) -> Result<usize, CliError> {
    if v > 0 {
        Ok(v)
    } else {
        Err(config_error(format!("{name} must be at least 1")))
    }
}

/// Row-major nested array to a matrix; every row must have the same length.
pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<Matrix, CliError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(config_error(format!("game.{name} must be a nonempty rectangular array")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(config_error(format!("game.{name} has non-finite entries")));
    }
    Ok(Matrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}
