//! The JSON experiment configuration consumed by every CLI subcommand.
//! A machine-readable schema lives at `schemas/experiment-config.schema.json`.

use std::path::Path;

use adaptrom::adaptive::{AdaptiveConfig, Strategy};
use adaptrom::problems::{BurgersConvention, BurgersProblem, BurstSchedule, HeatGridProblem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid config: {what}")]
    Invalid { what: String },
}

/// Root experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for every stochastic ingredient (burst schedules).
    pub seed: u64,
    pub problem: ProblemConfig,
    pub pod: PodSettings,
    pub adaptive: AdaptiveSettings,
    /// Strategy used by `run` unless overridden on the command line.
    pub strategy: Strategy,
    /// Strategies compared by `bench`.
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    /// Steps allowed to invoke adaptation in a time march (`null` = all).
    #[serde(default)]
    pub invocation_budget: Option<usize>,
    /// Full-order Newton tolerance.
    #[serde(default = "default_fom_tol")]
    pub fom_tol: f64,
    #[serde(default = "default_fom_max_iter")]
    pub fom_max_iter: usize,
    /// Embed full difference fields in result records.
    #[serde(default)]
    pub include_fields: bool,
}

fn default_fom_tol() -> f64 {
    1e-10
}

fn default_fom_max_iter() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodSettings {
    /// Number of dominant vectors kept as the initial trial basis.
    pub modes: usize,
    #[serde(default)]
    pub mean_subtract: bool,
}

/// Mirror of the core adaptive tolerances, with serde defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSettings {
    pub eps_rom: f64,
    pub eps_fom: f64,
    pub n_sel: usize,
    pub max_modes: usize,
    #[serde(default = "default_append_count")]
    pub append_count: usize,
    #[serde(default)]
    pub max_rounds: Option<usize>,
    #[serde(default = "default_qr_drop_tol")]
    pub qr_drop_tol: f64,
    #[serde(default = "default_max_newton_iter")]
    pub max_newton_iter: usize,
}

fn default_append_count() -> usize {
    1
}

fn default_qr_drop_tol() -> f64 {
    1e-10
}

fn default_max_newton_iter() -> usize {
    50
}

impl AdaptiveSettings {
    pub fn to_core(&self, strategy: Strategy) -> AdaptiveConfig {
        let mut config = AdaptiveConfig::new(strategy);
        config.eps_rom = self.eps_rom;
        config.eps_fom = self.eps_fom;
        config.n_sel = self.n_sel;
        config.max_modes = self.max_modes;
        config.append_count = self.append_count;
        config.max_rounds = self.max_rounds;
        config.qr_drop_tol = self.qr_drop_tol;
        config.max_newton_iter = self.max_newton_iter;
        config
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Bratu {
        nx: usize,
        ny: usize,
        /// Initial-guess exponent selecting the solution branch.
        guess_exponent: f64,
        /// Snapshots are collected at equal intervals in `(0, lambda_max]`.
        snapshot_count: usize,
        snapshot_lambda_max: f64,
        /// Transition parameters the ROM is evaluated at.
        eval_lambdas: Vec<f64>,
    },
    Burgers {
        nx: usize,
        ny: usize,
        convention: ConventionConfig,
        dt: f64,
        t_end: f64,
        /// Reynolds parameter of the snapshot-generating march.
        snapshot_re: f64,
        /// Keep every `stride`-th state as a snapshot column.
        #[serde(default = "default_stride")]
        snapshot_stride: usize,
        /// Reynolds parameters the ROM is evaluated at.
        eval_res: Vec<f64>,
        #[serde(default)]
        upwind: bool,
    },
    Heat {
        nx: usize,
        ny: usize,
        dt: f64,
        t_end: f64,
        burst: BurstSettings,
        #[serde(default = "default_stride")]
        snapshot_stride: usize,
    },
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionConfig {
    Verbatim,
    Physical,
}

impl From<ConventionConfig> for BurgersConvention {
    fn from(c: ConventionConfig) -> Self {
        match c {
            ConventionConfig::Verbatim => BurgersConvention::Verbatim,
            ConventionConfig::Physical => BurgersConvention::Physical,
        }
    }
}

/// Burst-load shape shared by the snapshot and evaluation schedules; the
/// two schedules differ only in seed: snapshot and evaluation runs share
/// the initial excitation and the maximum amplitude, nothing else.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstSettings {
    pub max_amplitude: f64,
    pub on_duration: f64,
    pub off_duration: f64,
    pub initial_amplitude: f64,
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Bratu { .. } => "bratu",
            ProblemConfig::Burgers { .. } => "burgers",
            ProblemConfig::Heat { .. } => "heat",
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |what: &str| ConfigError::Invalid {
            what: what.to_string(),
        };
        if !(self.fom_tol > 0.0) {
            return Err(invalid("fom_tol must be positive"));
        }
        if self.pod.modes == 0 {
            return Err(invalid("pod.modes must be positive"));
        }
        if !(self.adaptive.eps_rom > 0.0) || !(self.adaptive.eps_fom > 0.0) {
            return Err(invalid("adaptive tolerances must be positive"));
        }
        if self.adaptive.n_sel == 0 {
            return Err(invalid("adaptive.n_sel must be positive"));
        }
        if self.adaptive.max_modes < self.pod.modes {
            return Err(invalid("adaptive.max_modes must be at least pod.modes"));
        }
        match &self.problem {
            ProblemConfig::Bratu {
                nx,
                ny,
                snapshot_count,
                snapshot_lambda_max,
                eval_lambdas,
                guess_exponent,
            } => {
                if *nx == 0 || *ny == 0 {
                    return Err(invalid("bratu grid counts must be positive"));
                }
                if *snapshot_count == 0 {
                    return Err(invalid("bratu snapshot_count must be positive"));
                }
                if !(*snapshot_lambda_max > 0.0) {
                    return Err(invalid("bratu snapshot_lambda_max must be positive"));
                }
                if eval_lambdas.is_empty() {
                    return Err(invalid("bratu eval_lambdas must not be empty"));
                }
                if !(*guess_exponent > 0.0) {
                    return Err(invalid("bratu guess_exponent must be positive"));
                }
            }
            ProblemConfig::Burgers {
                nx,
                ny,
                dt,
                t_end,
                snapshot_re,
                snapshot_stride,
                eval_res,
                ..
            } => {
                if *nx == 0 || *ny == 0 {
                    return Err(invalid("burgers grid counts must be positive"));
                }
                if !(*dt > 0.0) || !(*t_end > 0.0) {
                    return Err(invalid("burgers dt and t_end must be positive"));
                }
                if !(*snapshot_re > 0.0) {
                    return Err(invalid("burgers snapshot_re must be positive"));
                }
                if *snapshot_stride == 0 {
                    return Err(invalid("burgers snapshot_stride must be positive"));
                }
                if eval_res.is_empty() {
                    return Err(invalid("burgers eval_res must not be empty"));
                }
            }
            ProblemConfig::Heat {
                nx,
                ny,
                dt,
                t_end,
                burst,
                snapshot_stride,
            } => {
                if *nx < 2 || *ny < 2 {
                    return Err(invalid("heat grid needs at least 2 nodes per axis"));
                }
                if !(*dt > 0.0) || !(*t_end > 0.0) {
                    return Err(invalid("heat dt and t_end must be positive"));
                }
                if !(burst.max_amplitude >= 0.0)
                    || !(burst.on_duration > 0.0)
                    || !(burst.off_duration >= 0.0)
                {
                    return Err(invalid("heat burst settings out of range"));
                }
                if *snapshot_stride == 0 {
                    return Err(invalid("heat snapshot_stride must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Builds the Burgers problem at a given Reynolds parameter.
    pub fn burgers_at(&self, re: f64) -> Option<BurgersProblem> {
        match &self.problem {
            ProblemConfig::Burgers {
                nx,
                ny,
                convention,
                dt,
                t_end,
                upwind,
                ..
            } => Some(
                BurgersProblem::new(*nx, *ny, re, (*convention).into(), *dt, *t_end)
                    .expect("validated config")
                    .with_upwind(*upwind),
            ),
            _ => None,
        }
    }

    /// Builds the heat problem with the snapshot-generation burst schedule
    /// (seeded by `seed`) or the evaluation schedule (seeded by `seed + 1`).
    pub fn heat_problem(&self, evaluation: bool) -> Option<HeatGridProblem> {
        match &self.problem {
            ProblemConfig::Heat {
                nx,
                ny,
                dt,
                t_end,
                burst,
                ..
            } => {
                let seed = if evaluation { self.seed + 1 } else { self.seed };
                let schedule = BurstSchedule::new(
                    seed,
                    burst.max_amplitude,
                    burst.on_duration,
                    burst.off_duration,
                )
                .expect("validated config")
                .with_initial_amplitude(burst.initial_amplitude);
                Some(
                    HeatGridProblem::new(*nx, *ny, *dt, *t_end, schedule)
                        .expect("validated config"),
                )
            }
            _ => None,
        }
    }
}
