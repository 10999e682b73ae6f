//! Experiment configuration as read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wfduality_core::bcre::BcreOptions;
use wfduality_core::bridge::FixationBudget;
use wfduality_core::duality::{ScalingScheme, Z_THRESHOLD};
use wfduality_core::thresholds::{self, DEFAULT_TOL};
use wfduality_core::wf_graph::{EnvSequence, FiniteModelParams};
use wfduality_core::{Error as ModelError, LimitParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Independent replicates per estimate.
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_z() -> f64 {
    Z_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Replicates whose full paths are written to CSV.
    pub record_paths: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("wfduality-out"), record_paths: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    SimulateX {
        params: LimitParams,
        x0: f64,
        horizon: f64,
        dt: f64,
    },
    SimulateZ {
        params: LimitParams,
        n0: u64,
        horizon: f64,
        #[serde(default)]
        bcre: BcreOptions,
    },
    SimulateFinite {
        model: FiniteModelParams,
        direction: Direction,
        /// Type-0 count forward, block count backward.
        start: usize,
        generations: usize,
        /// Fixed environment; drawn per replicate when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        env: Option<Vec<f64>>,
    },
    DualityQuenched {
        model: FiniteModelParams,
        /// `y_0, ..., y_g`; drawn once from the seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        env: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generations: Option<usize>,
        x: Vec<f64>,
        n: Vec<u64>,
    },
    DualityAnnealed {
        model: FiniteModelParams,
        generations: usize,
        x: Vec<f64>,
        n: Vec<u64>,
    },
    DualityMoment {
        params: LimitParams,
        x: Vec<f64>,
        n: Vec<u64>,
        t: Vec<f64>,
        dt: f64,
        #[serde(default)]
        bcre: BcreOptions,
    },
    Thresholds {
        params: LimitParams,
        #[serde(default = "default_tol")]
        tol: f64,
        /// Samples for Monte Carlo cross-checks of `beta*` and `alpha*`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        monte_carlo: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corroboration: Option<Corroboration>,
    },
    Fixation {
        params: LimitParams,
        x: Vec<f64>,
        #[serde(default)]
        budget: FixationBudget,
    },
    Convergence {
        params: LimitParams,
        sizes: Vec<usize>,
        #[serde(default)]
        scheme: ScalingScheme,
        x: f64,
        n: u64,
        t: f64,
        dt: f64,
    },
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Long-run corroboration of an extinction classification by simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corroboration {
    pub x: f64,
    pub horizons: Vec<f64>,
    pub dt: f64,
    #[serde(default = "default_n0")]
    pub n0: u64,
    #[serde(default = "default_level")]
    pub level: u64,
    #[serde(default)]
    pub bcre: BcreOptions,
}

fn default_n0() -> u64 {
    10
}

fn default_level() -> u64 {
    10
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::SimulateX { .. } => "simulate-x",
            Experiment::SimulateZ { .. } => "simulate-z",
            Experiment::SimulateFinite { .. } => "simulate-finite",
            Experiment::DualityQuenched { .. } => "duality-quenched",
            Experiment::DualityAnnealed { .. } => "duality-annealed",
            Experiment::DualityMoment { .. } => "duality-moment",
            Experiment::Thresholds { .. } => "thresholds",
            Experiment::Fixation { .. } => "fixation",
            Experiment::Convergence { .. } => "convergence",
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked without simulating.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be positive".into()));
        }
        if self.z_threshold.is_nan() || self.z_threshold <= 0.0 {
            return Err(CliError::Config("z_threshold must be positive".into()));
        }
        match &self.experiment {
            Experiment::SimulateX { x0, horizon, dt, .. } => {
                unit("x0", *x0)?;
                positive("horizon", *horizon)?;
                positive("dt", *dt)?;
            }
            Experiment::SimulateZ { params, n0, horizon, .. } => {
                params.require_finite_activity()?;
                if *n0 == 0 {
                    return Err(CliError::Config("n0 must be at least 1".into()));
                }
                positive("horizon", *horizon)?;
            }
            Experiment::SimulateFinite { model, direction, start, generations, env } => {
                let n = model.population_size();
                match direction {
                    Direction::Forward if *start > n => return Err(CliError::Config(format!("start must be at most {n}"))),
                    Direction::Backward if *start == 0 || *start > n => {
                        return Err(CliError::Config(format!("start must lie in 1..={n}")))
                    }
                    _ => {}
                }
                if let Some(env) = env {
                    EnvSequence::given(env.clone())?;
                    if env.len() != *generations {
                        return Err(CliError::Config("env must have one value per generation".into()));
                    }
                }
            }
            Experiment::DualityQuenched { model, env, generations, x, n } => {
                match (env, generations) {
                    (Some(env), None) => {
                        EnvSequence::given(env.clone())?;
                        if env.is_empty() {
                            return Err(CliError::Config("env needs at least one value".into()));
                        }
                    }
                    (None, Some(_)) => {}
                    _ => return Err(CliError::Config("give exactly one of env and generations".into())),
                }
                grid(model, x, n)?;
            }
            Experiment::DualityAnnealed { model, x, n, .. } => grid(model, x, n)?,
            Experiment::DualityMoment { params, x, n, t, dt, .. } => {
                params.require_finite_activity()?;
                nonempty("x", x)?;
                nonempty("n", n)?;
                nonempty("t", t)?;
                for &v in x {
                    unit("x", v)?;
                }
                if n.contains(&0) {
                    return Err(CliError::Config("n must be at least 1".into()));
                }
                for &v in t {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(CliError::Config(format!("t = {v} must be finite and nonnegative")));
                    }
                }
                positive("dt", *dt)?;
            }
            Experiment::Thresholds { params, tol, corroboration, .. } => {
                thresholds::classify(params, *tol)?;
                if let Some(c) = corroboration {
                    unit("x", c.x)?;
                    nonempty("horizons", &c.horizons)?;
                    positive("dt", c.dt)?;
                }
            }
            Experiment::Fixation { params, x, budget } => {
                params.require_finite_activity()?;
                nonempty("x", x)?;
                for &v in x {
                    unit("x", v)?;
                }
                if params.sigma() == 0.0 {
                    let report = thresholds::classify(params, DEFAULT_TOL)?;
                    if report.classification == thresholds::Classification::ExtinctionAlmostSure {
                        return Err(ModelError::RegimeMismatch {
                            expected: thresholds::Classification::SurvivalPossible.name(),
                            found: report.classification.name(),
                        }
                        .into());
                    }
                }
                positive("budget.dt", budget.dt)?;
            }
            Experiment::Convergence { params, sizes, scheme, x, t, dt, .. } => {
                nonempty("sizes", sizes)?;
                unit("x", *x)?;
                positive("dt", *dt)?;
                for &size in sizes {
                    scheme.model(params, size, *t)?;
                    let zeros = *x * size as f64;
                    if (zeros - zeros.round()).abs() > 1e-9 {
                        return Err(CliError::Config(format!("x = {x} is not a multiple of 1/{size}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn grid(model: &FiniteModelParams, x: &[f64], n: &[u64]) -> Result<(), CliError> {
    nonempty("x", x)?;
    nonempty("n", n)?;
    let size = model.population_size();
    for &v in x {
        let zeros = v * size as f64;
        if !(0.0..=1.0).contains(&v) || (zeros - zeros.round()).abs() > 1e-9 {
            return Err(CliError::Config(format!("x = {v} is not a multiple of 1/{size} in [0,1]")));
        }
    }
    if let Some(v) = n.iter().find(|&&v| v == 0 || v as usize > size) {
        return Err(CliError::Config(format!("n = {v} outside 1..={size}")));
    }
    Ok(())
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(CliError::Config(format!("{name} must be nonempty")));
    }
    Ok(())
}

fn unit(name: &str, v: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(CliError::Config(format!("{name} = {v} outside [0,1]")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("{name} = {v} must be positive and finite")));
    }
    Ok(())
}
