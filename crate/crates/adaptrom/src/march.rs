//! Time marching for the transient problems, at full order and at reduced
//! order with online adaptation. The reduced march carries the (possibly
//! adapted) basis from step to step and enforces a global budget on how many
//! steps may invoke the adaptive procedure.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::adaptive::{adapt_loop, AdaptContext, AdaptRound, AdaptiveConfig, AdaptiveError};
use crate::model::{newton_solve_full, SolveError, TimeStepper};
use crate::pod::RemainderPool;
use crate::problems::TransientProblem;
use crate::rom::{fom_error, reduced_newton, RomState};

/// A completed full-order march.
#[derive(Debug, Clone)]
pub struct FomMarch {
    /// Accepted states, one per step (the initial state is not included).
    pub states: Vec<DVector<f64>>,
    /// Time levels matching `states`.
    pub times: Vec<f64>,
    /// Newton iterations per step.
    pub newton_iterations: Vec<usize>,
    /// Total wall time spent in the Newton solves, nanoseconds.
    pub solve_ns: u64,
}

/// Marches a transient problem with full-order Newton per implicit step.
pub fn fom_march<P: TransientProblem>(
    problem: &P,
    steps: usize,
    tol: f64,
    max_iter: usize,
) -> Result<FomMarch, SolveError> {
    let mut stepper = TimeStepper::new(problem.dt(), problem.initial_state())?;
    let mut states = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps);
    let mut iterations = Vec::with_capacity(steps);
    let started = Instant::now();
    for k in 0..steps {
        let t = (k as f64 + 1.0) * stepper.dt();
        let model = problem.step_model(stepper.previous().clone(), t);
        let sol = newton_solve_full(&model, stepper.previous(), tol, max_iter)?;
        stepper.advance(sol.state.clone());
        states.push(sol.state);
        times.push(t);
        iterations.push(sol.iterations);
    }
    Ok(FomMarch {
        states,
        times,
        newton_iterations: iterations,
        solve_ns: started.elapsed().as_nanos() as u64,
    })
}

/// Settings of a reduced march.
#[derive(Debug, Clone)]
pub struct RomMarchConfig {
    pub adaptive: AdaptiveConfig,
    /// How many steps may invoke the adaptive procedure (`None` = every
    /// step that needs it). Once spent, later steps run plain reduced
    /// Newton and accept whatever error remains.
    pub invocation_budget: Option<usize>,
}

/// One step at which the adaptive procedure ran.
#[derive(Debug, Clone)]
pub struct AdaptInvocation {
    pub step: usize,
    pub time: f64,
    /// Basis width just before and after the invocation.
    pub n_before: usize,
    pub n_after: usize,
    /// Whether the invocation reached `eps <= eps_fom`.
    pub converged: bool,
    pub rounds: Vec<AdaptRound>,
}

impl AdaptInvocation {
    /// Net post-QR basis growth of this invocation.
    pub fn growth(&self) -> i64 {
        self.n_after as i64 - self.n_before as i64
    }
}

/// A completed reduced march.
#[derive(Debug)]
pub struct RomMarch {
    /// Reconstructed approximate solutions, one per step.
    pub states: Vec<DVector<f64>>,
    /// Time levels matching `states`.
    pub times: Vec<f64>,
    /// Full-model error after each step's solve.
    pub eps_history: Vec<f64>,
    /// The steps that invoked adaptation, in order.
    pub invocations: Vec<AdaptInvocation>,
    /// The basis after the final step.
    pub final_basis: DMatrix<f64>,
    /// Wall time in reduced solves (projection + reduced Newton), ns.
    pub rom_solve_ns: u64,
    /// Wall time in enrichment computations, ns.
    pub enrich_ns: u64,
}

impl RomMarch {
    /// Full-model error at the last step.
    pub fn final_eps(&self) -> f64 {
        *self
            .eps_history
            .last()
            .expect("march ran at least one step")
    }

    /// Total adaptation rounds across the march.
    pub fn total_rounds(&self) -> usize {
        self.invocations.iter().map(|inv| inv.rounds.len()).sum()
    }
}

/// Marches a transient problem in the reduced space, adapting the basis
/// online whenever the full-model error exceeds `eps_fom` and the
/// invocation budget allows it.
pub fn rom_march<P: TransientProblem>(
    problem: &P,
    steps: usize,
    initial_basis: DMatrix<f64>,
    config: &RomMarchConfig,
    mut pool: Option<RemainderPool>,
) -> Result<RomMarch, AdaptiveError> {
    if !(problem.dt() > 0.0) {
        return Err(AdaptiveError::InvalidConfig {
            what: "time step must be positive",
        });
    }
    let mut stepper =
        TimeStepper::new(problem.dt(), problem.initial_state()).expect("dt validated");
    let mut basis = initial_basis.clone();
    let mut invocations_left = config.invocation_budget;
    let mut states = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps);
    let mut eps_history = Vec::with_capacity(steps);
    let mut invocations = Vec::new();
    let mut rom_solve_ns = 0u64;
    let mut enrich_ns = 0u64;

    for k in 0..steps {
        let t = (k as f64 + 1.0) * stepper.dt();
        let model = problem.step_model(stepper.previous().clone(), t);
        let rom = RomState::new(basis, stepper.previous().clone())?;
        let may_adapt = invocations_left.is_none_or(|left| left > 0);

        let (state, eps, rounds, converged) = if may_adapt {
            let mut ctx = AdaptContext {
                initial_basis: &initial_basis,
                pool: pool.as_mut(),
            };
            let solve_started = Instant::now();
            let outcome = match adapt_loop(&model, rom, &config.adaptive, &mut ctx) {
                Ok(out) => out,
                // budget or stall inside one step: accept the state reached
                Err(AdaptiveError::AdaptationBudgetExhausted(out)) => *out,
                Err(e) => return Err(e),
            };
            let total_ns = solve_started.elapsed().as_nanos() as u64;
            let round_ns: u64 = outcome.rounds.iter().map(|r| r.wall_ns).sum();
            enrich_ns += round_ns;
            rom_solve_ns += total_ns.saturating_sub(round_ns);
            (
                outcome.state,
                outcome.eps,
                outcome.rounds,
                outcome.converged,
            )
        } else {
            let mut rom = rom;
            let solve_started = Instant::now();
            reduced_newton(
                &model,
                &mut rom,
                config.adaptive.eps_rom,
                config.adaptive.max_newton_iter,
            )?;
            let eps = fom_error(&model, &rom);
            rom_solve_ns += solve_started.elapsed().as_nanos() as u64;
            (rom, eps, Vec::new(), eps <= config.adaptive.eps_fom)
        };

        if !rounds.is_empty() {
            if let Some(left) = invocations_left.as_mut() {
                *left -= 1;
            }
            invocations.push(AdaptInvocation {
                step: k,
                time: t,
                n_before: rounds
                    .first()
                    .map(|r| r.n_before)
                    .unwrap_or(state.mode_count()),
                n_after: state.mode_count(),
                converged,
                rounds,
            });
        }

        basis = state.basis().clone();
        stepper.advance(state.reconstruct());
        states.push(stepper.previous().clone());
        times.push(t);
        eps_history.push(eps);
    }

    Ok(RomMarch {
        states,
        times,
        eps_history,
        invocations,
        final_basis: basis,
        rom_solve_ns,
        enrich_ns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::Strategy;
    use crate::pod::{collect_snapshots, pod_compute};
    use crate::problems::{BurgersConvention, BurgersProblem, BurstSchedule, HeatGridProblem};

    #[test]
    fn fom_march_tracks_the_analytic_field() {
        let p = BurgersProblem::new(8, 8, 50.0, BurgersConvention::Physical, 0.01, 0.1).unwrap();
        let march = fom_march(&p, 10, 1e-10, 30).unwrap();
        assert_eq!(march.states.len(), 10);
        let err = (march.states.last().unwrap() - p.analytic_state(0.1)).amax();
        assert!(err < 0.05, "end-state error {err}");
    }

    #[test]
    fn rom_march_without_budget_matches_plain_rom() {
        // a heat march whose initial basis is adequate: no invocations
        let schedule = BurstSchedule::new(5, 0.0, 0.1, 0.1).unwrap();
        let p = HeatGridProblem::new(6, 6, 0.01, 0.1, schedule).unwrap();
        let n = crate::problems::TransientProblem::dim(&p);
        let basis = DMatrix::identity(n, n);
        let config = RomMarchConfig {
            adaptive: {
                let mut c = AdaptiveConfig::new(Strategy::LocalOpt);
                c.n_sel = 4;
                c.eps_fom = 1e-3;
                c.max_modes = n;
                c
            },
            invocation_budget: Some(3),
        };
        let march = rom_march(&p, 5, basis, &config, None).unwrap();
        assert!(march.invocations.is_empty());
        assert!(march.final_eps() <= 1e-3);
    }

    #[test]
    fn rom_march_consumes_the_invocation_budget() {
        // Burgers at a parameter away from the snapshot run, with a basis too
        // small to be adequate and a tolerance tight enough to trigger
        let train =
            BurgersProblem::new(6, 6, 50.0, BurgersConvention::Verbatim, 0.01, 0.1).unwrap();
        let fom = fom_march(&train, 10, 1e-10, 30).unwrap();
        let schedule: Vec<f64> = fom.times.clone();
        let snaps = collect_snapshots(&schedule, |t| {
            let k = (t / 0.01).round() as usize - 1;
            Ok::<_, std::convert::Infallible>(fom.states[k].clone())
        })
        .unwrap();
        let basis = pod_compute(&snaps, false).unwrap();
        let (phi0, pool) = basis.truncate(1).unwrap();

        let eval =
            BurgersProblem::new(6, 6, 100.0, BurgersConvention::Verbatim, 0.01, 0.1).unwrap();
        let config = RomMarchConfig {
            adaptive: {
                let mut c = AdaptiveConfig::new(Strategy::FRom);
                c.eps_fom = 1e-10;
                c.eps_rom = 1e-12;
                c.max_modes = 20;
                c.max_rounds = Some(4);
                c
            },
            invocation_budget: Some(2),
        };
        let march = rom_march(&eval, 10, phi0, &config, Some(pool)).unwrap();
        assert_eq!(march.invocations.len(), 2, "budget should be spent exactly");
        for inv in &march.invocations {
            assert!(!inv.rounds.is_empty());
        }
    }
}
