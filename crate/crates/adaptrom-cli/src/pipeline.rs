//! Orchestration of the experiment stages: snapshot generation, POD,
//! full-order baselines, and per-strategy adaptive evaluations, producing
//! versioned result records.

use std::time::Instant;

use adaptrom::adaptive::{adapt_loop, AdaptContext, AdaptRound, AdaptiveError, Strategy};
use adaptrom::march::{fom_march, rom_march, RomMarchConfig};
use adaptrom::model::{newton_solve_full, FullModel};
use adaptrom::pod::{collect_snapshots, pod_compute, PodBasis, RemainderPool, SnapshotMatrix};
use adaptrom::problems::{BratuProblem, TransientProblem};
use adaptrom::rom::RomState;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, ProblemConfig};
use crate::field::{field_difference, FieldDiffSummary, FieldGrid};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("snapshot stage failed: {0}")]
    Pod(#[from] adaptrom::pod::PodError),
    #[error("full-order solve failed: {0}")]
    Solve(#[from] adaptrom::model::SolveError),
    #[error("problem construction failed: {0}")]
    Problem(#[from] adaptrom::problems::ProblemError),
    #[error("reduced solve failed: {0}")]
    Rom(#[from] adaptrom::rom::RomError),
    #[error("adaptive solve failed: {0}")]
    Adaptive(#[from] AdaptiveError),
    #[error(transparent)]
    Romx(#[from] crate::romx::RomxError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

/// Wall-clock nanoseconds per phase. Excluded from determinism comparisons.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub fom_solve_ns: u64,
    pub rom_solve_ns: u64,
    pub enrich_ns: u64,
    pub total_ns: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldDiffRecord {
    pub field: String,
    pub max_abs: f64,
    pub l2: f64,
}

/// One adaptive invocation in a time march (a steady solve has at most one).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub step: usize,
    pub n_before: usize,
    pub n_after: usize,
    pub converged: bool,
    pub rounds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub final_eps: f64,
    pub converged: bool,
    pub basis_size: usize,
    /// Number of steps (or solves) that invoked adaptation.
    pub adaptation_count: usize,
    pub invocations: Vec<InvocationRecord>,
    /// Flattened adaptation rounds, renumbered in execution order.
    pub trace: Vec<AdaptRound>,
    pub field_diff: Vec<FieldDiffRecord>,
    pub timings: PhaseTimings,
    /// Full difference fields, present when the config requests them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub difference_fields: Vec<FieldGrid>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub parameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<EvaluationOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub problem: String,
    pub strategy: String,
    pub seed: u64,
    pub evaluations: Vec<EvaluationRecord>,
}

/// A full-order reference solution at one evaluation point.
#[derive(Debug, Clone)]
pub struct FomBaseline {
    pub parameter: f64,
    pub final_state: DVector<f64>,
    pub solve_ns: u64,
}

/// Precomputed pipeline prefix shared by every strategy run.
pub struct Prepared {
    pub snapshots: SnapshotMatrix,
    pub basis: PodBasis,
    pub trial: DMatrix<f64>,
    pub pool: RemainderPool,
    pub baselines: Vec<FomBaseline>,
}

pub struct Pipeline<'a> {
    config: &'a ExperimentConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.config
    }

    /// Generates the snapshot matrix for the configured problem.
    pub fn snapshots(&self) -> Result<SnapshotMatrix, HarnessError> {
        match &self.config.problem {
            ProblemConfig::Bratu {
                nx,
                ny,
                guess_exponent,
                snapshot_count,
                snapshot_lambda_max,
                ..
            } => {
                let m = *snapshot_count;
                let schedule: Vec<f64> = (1..=m)
                    .map(|k| snapshot_lambda_max * k as f64 / m as f64)
                    .collect();
                let snaps = collect_snapshots(&schedule, |lambda| {
                    let problem = BratuProblem::new(*nx, *ny, lambda, *guess_exponent)?;
                    let sol = newton_solve_full(
                        &problem,
                        &problem.reference_state(),
                        self.config.fom_tol,
                        self.config.fom_max_iter,
                    )
                    .map_err(HarnessError::from)?;
                    Ok::<_, HarnessError>(sol.state)
                })?;
                Ok(snaps)
            }
            ProblemConfig::Burgers {
                snapshot_re,
                snapshot_stride,
                ..
            } => {
                let problem = self
                    .config
                    .burgers_at(*snapshot_re)
                    .expect("burgers config");
                let march = fom_march(
                    &problem,
                    problem.step_count(),
                    self.config.fom_tol,
                    self.config.fom_max_iter,
                )?;
                Ok(strided_snapshots(
                    &march.states,
                    &march.times,
                    *snapshot_stride,
                )?)
            }
            ProblemConfig::Heat {
                snapshot_stride, ..
            } => {
                let problem = self.config.heat_problem(false).expect("heat config");
                let march = fom_march(
                    &problem,
                    problem.step_count(),
                    self.config.fom_tol,
                    self.config.fom_max_iter,
                )?;
                Ok(strided_snapshots(
                    &march.states,
                    &march.times,
                    *snapshot_stride,
                )?)
            }
        }
    }

    /// POD of the snapshots, truncated to the configured mode count.
    pub fn pod(
        &self,
        snapshots: &SnapshotMatrix,
    ) -> Result<(PodBasis, DMatrix<f64>, RemainderPool), HarnessError> {
        let basis = pod_compute(snapshots, self.config.pod.mean_subtract)?;
        let modes = self.config.pod.modes.min(basis.len());
        let (trial, pool) = basis.truncate(modes)?;
        Ok((basis, trial, pool))
    }

    /// Full-order reference solutions (and their cost) per evaluation point.
    pub fn baselines(&self) -> Result<Vec<FomBaseline>, HarnessError> {
        match &self.config.problem {
            ProblemConfig::Bratu {
                nx,
                ny,
                guess_exponent,
                eval_lambdas,
                ..
            } => {
                let mut out = Vec::new();
                for &lambda in eval_lambdas {
                    let problem = BratuProblem::new(*nx, *ny, lambda, *guess_exponent)?;
                    let started = Instant::now();
                    let sol = newton_solve_full(
                        &problem,
                        &problem.reference_state(),
                        self.config.fom_tol,
                        self.config.fom_max_iter,
                    )?;
                    out.push(FomBaseline {
                        parameter: lambda,
                        final_state: sol.state,
                        solve_ns: started.elapsed().as_nanos() as u64,
                    });
                }
                Ok(out)
            }
            ProblemConfig::Burgers { eval_res, .. } => {
                let mut out = Vec::new();
                for &re in eval_res {
                    let problem = self.config.burgers_at(re).expect("burgers config");
                    let march = fom_march(
                        &problem,
                        problem.step_count(),
                        self.config.fom_tol,
                        self.config.fom_max_iter,
                    )?;
                    out.push(FomBaseline {
                        parameter: re,
                        final_state: march.states.last().expect("steps >= 1").clone(),
                        solve_ns: march.solve_ns,
                    });
                }
                Ok(out)
            }
            ProblemConfig::Heat { .. } => {
                let problem = self.config.heat_problem(true).expect("heat config");
                let march = fom_march(
                    &problem,
                    problem.step_count(),
                    self.config.fom_tol,
                    self.config.fom_max_iter,
                )?;
                Ok(vec![FomBaseline {
                    parameter: (self.config.seed + 1) as f64,
                    final_state: march.states.last().expect("steps >= 1").clone(),
                    solve_ns: march.solve_ns,
                }])
            }
        }
    }

    /// Runs the shared pipeline prefix once.
    pub fn prepare(&self) -> Result<Prepared, HarnessError> {
        let snapshots = self.snapshots()?;
        let (basis, trial, pool) = self.pod(&snapshots)?;
        let baselines = self.baselines()?;
        Ok(Prepared {
            snapshots,
            basis,
            trial,
            pool,
            baselines,
        })
    }

    /// Evaluates one strategy at every evaluation point.
    pub fn run_strategy(&self, strategy: Strategy, prepared: &Prepared) -> ResultRecord {
        let mut evaluations = Vec::new();
        for baseline in &prepared.baselines {
            let evaluation = match self.evaluate_point(strategy, prepared, baseline) {
                Ok(outcome) => EvaluationRecord {
                    parameter: baseline.parameter,
                    outcome: Some(outcome),
                    error: None,
                },
                Err(e) => EvaluationRecord {
                    parameter: baseline.parameter,
                    outcome: None,
                    error: Some(e.to_string()),
                },
            };
            evaluations.push(evaluation);
        }
        ResultRecord {
            schema_version: RESULT_SCHEMA_VERSION,
            problem: self.config.problem.kind().to_string(),
            strategy: strategy.to_string(),
            seed: self.config.seed,
            evaluations,
        }
    }

    fn evaluate_point(
        &self,
        strategy: Strategy,
        prepared: &Prepared,
        baseline: &FomBaseline,
    ) -> Result<EvaluationOutcome, HarnessError> {
        match &self.config.problem {
            ProblemConfig::Bratu {
                nx,
                ny,
                guess_exponent,
                ..
            } => {
                let problem = BratuProblem::new(*nx, *ny, baseline.parameter, *guess_exponent)?;
                let rom = RomState::new(prepared.trial.clone(), problem.reference_state())?;
                let adaptive = self.config.adaptive.to_core(strategy);
                let mut pool = prepared.pool.clone();
                let mut ctx = AdaptContext {
                    initial_basis: &prepared.trial,
                    pool: Some(&mut pool),
                };

                let started = Instant::now();
                let (outcome, converged) = match adapt_loop(&problem, rom, &adaptive, &mut ctx) {
                    Ok(out) => (out, true),
                    Err(AdaptiveError::AdaptationBudgetExhausted(out)) => (*out, false),
                    Err(e) => return Err(e.into()),
                };
                let total_adapt_ns = started.elapsed().as_nanos() as u64;
                let enrich_ns: u64 = outcome.rounds.iter().map(|r| r.wall_ns).sum();

                let rows = self.state_fields(&outcome.state.reconstruct());
                let fom_rows = self.state_fields(&baseline.final_state);
                let (diffs, summaries) = diff_fields(&fom_rows, &rows)?;

                Ok(EvaluationOutcome {
                    final_eps: outcome.eps,
                    converged,
                    basis_size: outcome.state.mode_count(),
                    adaptation_count: usize::from(!outcome.rounds.is_empty()),
                    invocations: if outcome.rounds.is_empty() {
                        Vec::new()
                    } else {
                        vec![InvocationRecord {
                            step: 0,
                            n_before: outcome.rounds[0].n_before,
                            n_after: outcome.state.mode_count(),
                            converged,
                            rounds: outcome.rounds.len(),
                        }]
                    },
                    trace: renumber(outcome.rounds),
                    field_diff: summaries,
                    timings: PhaseTimings {
                        fom_solve_ns: baseline.solve_ns,
                        rom_solve_ns: total_adapt_ns.saturating_sub(enrich_ns),
                        enrich_ns,
                        total_ns: total_adapt_ns,
                    },
                    difference_fields: if self.config.include_fields {
                        diffs
                    } else {
                        Vec::new()
                    },
                })
            }
            ProblemConfig::Burgers { .. } => {
                let problem = self
                    .config
                    .burgers_at(baseline.parameter)
                    .expect("burgers config");
                let steps = problem.step_count();
                self.evaluate_march(strategy, prepared, baseline, &problem, steps)
            }
            ProblemConfig::Heat { .. } => {
                let problem = self.config.heat_problem(true).expect("heat config");
                let steps = problem.step_count();
                self.evaluate_march(strategy, prepared, baseline, &problem, steps)
            }
        }
    }

    fn evaluate_march<P: TransientProblem>(
        &self,
        strategy: Strategy,
        prepared: &Prepared,
        baseline: &FomBaseline,
        problem: &P,
        steps: usize,
    ) -> Result<EvaluationOutcome, HarnessError> {
        let march_config = RomMarchConfig {
            adaptive: self.config.adaptive.to_core(strategy),
            invocation_budget: self.config.invocation_budget,
        };
        let started = Instant::now();
        let march = rom_march(
            problem,
            steps,
            prepared.trial.clone(),
            &march_config,
            Some(prepared.pool.clone()),
        )?;
        let total_ns = started.elapsed().as_nanos() as u64;

        let rows = self.state_fields(march.states.last().expect("steps >= 1"));
        let fom_rows = self.state_fields(&baseline.final_state);
        let (diffs, summaries) = diff_fields(&fom_rows, &rows)?;

        let invocations: Vec<InvocationRecord> = march
            .invocations
            .iter()
            .map(|inv| InvocationRecord {
                step: inv.step,
                n_before: inv.n_before,
                n_after: inv.n_after,
                converged: inv.converged,
                rounds: inv.rounds.len(),
            })
            .collect();
        let trace: Vec<AdaptRound> = march
            .invocations
            .iter()
            .flat_map(|inv| inv.rounds.iter().cloned())
            .collect();

        Ok(EvaluationOutcome {
            final_eps: march.final_eps(),
            converged: march.final_eps() <= self.config.adaptive.eps_fom,
            basis_size: march.final_basis.ncols(),
            adaptation_count: march.invocations.len(),
            invocations,
            trace: renumber(trace),
            field_diff: summaries,
            timings: PhaseTimings {
                fom_solve_ns: baseline.solve_ns,
                rom_solve_ns: march.rom_solve_ns,
                enrich_ns: march.enrich_ns,
                total_ns,
            },
            difference_fields: if self.config.include_fields {
                diffs
            } else {
                Vec::new()
            },
        })
    }

    /// Splits a state vector into named grid fields, problem-specifically.
    pub fn state_fields(&self, state: &DVector<f64>) -> Vec<FieldGrid> {
        match &self.config.problem {
            ProblemConfig::Bratu { nx, ny, .. } => {
                vec![FieldGrid::new("u", *nx, *ny, state.as_slice().to_vec()).expect("state shape")]
            }
            ProblemConfig::Burgers { nx, ny, .. } => {
                let nn = nx * ny;
                vec![
                    FieldGrid::new("u", *nx, *ny, state.as_slice()[..nn].to_vec())
                        .expect("state shape"),
                    FieldGrid::new("v", *nx, *ny, state.as_slice()[nn..].to_vec())
                        .expect("state shape"),
                ]
            }
            ProblemConfig::Heat { nx, ny, .. } => {
                vec![FieldGrid::new("T", *nx, *ny - 1, state.as_slice().to_vec())
                    .expect("state shape")]
            }
        }
    }
}

fn renumber(mut rounds: Vec<AdaptRound>) -> Vec<AdaptRound> {
    for (k, r) in rounds.iter_mut().enumerate() {
        r.round = k;
    }
    rounds
}

fn diff_fields(
    fom: &[FieldGrid],
    rom: &[FieldGrid],
) -> Result<(Vec<FieldGrid>, Vec<FieldDiffRecord>), HarnessError> {
    let mut diffs = Vec::new();
    let mut summaries = Vec::new();
    for (f, r) in fom.iter().zip(rom.iter()) {
        let (diff, FieldDiffSummary { max_abs, l2 }) = field_difference(f, r)?;
        summaries.push(FieldDiffRecord {
            field: f.name.clone(),
            max_abs,
            l2,
        });
        diffs.push(diff);
    }
    Ok((diffs, summaries))
}

fn strided_snapshots(
    states: &[DVector<f64>],
    times: &[f64],
    stride: usize,
) -> Result<SnapshotMatrix, adaptrom::pod::PodError> {
    let picked: Vec<usize> = (0..states.len()).step_by(stride).collect();
    let n = states[0].len();
    let mut data = DMatrix::zeros(n, picked.len());
    let mut params = Vec::with_capacity(picked.len());
    for (c, &k) in picked.iter().enumerate() {
        data.set_column(c, &states[k]);
        params.push(times[k]);
    }
    SnapshotMatrix::new(data, params)
}
