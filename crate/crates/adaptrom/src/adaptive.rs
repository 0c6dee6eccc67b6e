//! Online basis adaptation: row selection, local operators, the closed-form
//! low-rank additional basis, the full least-squares enrichment, POD
//! appending, thin-QR extension with column dropping, and the adaptive loop
//! with its basis-cap/reset policy.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::model::FullModel;
use crate::pod::RemainderPool;
use crate::rom::{fom_error, reduced_newton, RomError, RomState};

/// Enrichment strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Append the next unused POD vectors.
    PodAppend,
    /// Append the minimizer of `||J psi - r||`, one full-dimension solve.
    FRom,
    /// Append the low-rank update built from selected residual rows.
    LocalOpt,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::PodAppend => "pod-append",
            Strategy::FRom => "f-rom",
            Strategy::LocalOpt => "local-opt",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pod-append" => Ok(Strategy::PodAppend),
            "f-rom" => Ok(Strategy::FRom),
            "local-opt" => Ok(Strategy::LocalOpt),
            other => Err(format!(
                "unknown strategy `{other}` (expected pod-append, f-rom, or local-opt)"
            )),
        }
    }
}

/// Tolerances and limits of the adaptive loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub strategy: Strategy,
    /// Reduced-solver tolerance on `||Phi^T r||`.
    pub eps_rom: f64,
    /// Full-model error tolerance on `||r||`; adaptation triggers above it.
    pub eps_fom: f64,
    /// Number of residual rows the local strategy selects.
    pub n_sel: usize,
    /// Basis-size cap; exceeding it resets to the initial basis.
    pub max_modes: usize,
    /// Vectors appended per pod-append round.
    pub append_count: usize,
    /// Maximum adaptation rounds per solve (`None` = unlimited).
    pub max_rounds: Option<usize>,
    /// Relative column-drop tolerance of the thin-QR extension.
    pub qr_drop_tol: f64,
    /// Iteration cap of each reduced Newton solve.
    pub max_newton_iter: usize,
}

impl AdaptiveConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            eps_rom: 1e-8,
            eps_fom: 1e-6,
            n_sel: 1,
            max_modes: usize::MAX,
            append_count: 1,
            max_rounds: None,
            qr_drop_tol: 1e-10,
            max_newton_iter: 50,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), AdaptiveError> {
        if !(self.eps_rom > 0.0) || !(self.eps_fom > 0.0) {
            return Err(AdaptiveError::InvalidConfig {
                what: "tolerances must be positive",
            });
        }
        if self.n_sel == 0 || self.n_sel > dim {
            return Err(AdaptiveError::InvalidConfig {
                what: "n_sel must be in 1..=N",
            });
        }
        if self.max_modes == 0 {
            return Err(AdaptiveError::InvalidConfig {
                what: "max_modes must be positive",
            });
        }
        if self.append_count == 0 {
            return Err(AdaptiveError::InvalidConfig {
                what: "append count must be positive",
            });
        }
        if !(self.qr_drop_tol >= 0.0) {
            return Err(AdaptiveError::InvalidConfig {
                what: "QR drop tolerance must be nonnegative",
            });
        }
        if self.max_newton_iter == 0 {
            return Err(AdaptiveError::InvalidConfig {
                what: "Newton iteration cap must be positive",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("adaptation budget exhausted with eps = {:.3e}", .0.eps)]
    AdaptationBudgetExhausted(Box<AdaptOutcome>),
    #[error("ROM solution is zero; the low-rank update is undefined")]
    ZeroRomSolution,
    #[error("selected residual rows are all zero; adaptation is unnecessary there")]
    ZeroLocalResidual,
    #[error("local Jacobian has no numerical row rank")]
    RankDeficientLocalJacobian,
    #[error("remainder pool exhausted: requested {requested}, {available} left")]
    PoolExhausted { requested: usize, available: usize },
    #[error("singular Jacobian in the enrichment solve")]
    SingularJacobian,
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error("invalid adaptive configuration: {what}")]
    InvalidConfig { what: &'static str },
}

/// The residual and Jacobian rows picked by the Boolean selector, stored as
/// an index list (never as a dense `N x n_sel` matrix).
#[derive(Debug, Clone)]
pub struct LocalOperators {
    /// Selected row indices, ordered by selection priority.
    pub indices: Vec<usize>,
    /// `L_J`: the selected Jacobian rows, `n_sel x N`.
    pub jacobian_rows: DMatrix<f64>,
    /// `L_r`: the selected residual entries, length `n_sel`.
    pub residual_rows: DVector<f64>,
}

/// The auxiliary vectors realizing the low-rank update `Psi = Phi + xi psi^T`.
#[derive(Debug, Clone)]
pub struct AuxiliaryUpdate {
    /// `xi = L_J^T (L_J L_J^T)^{-1} xi_tilde`, length `N`.
    pub xi: DVector<f64>,
    /// `psi = q / d`, a unit vector of length `n`.
    pub psi: DVector<f64>,
    /// `d = ||q||_2`.
    pub magnitude: f64,
    /// `xi_tilde = -L_r / d`, length `n_sel`.
    pub xi_tilde: DVector<f64>,
    /// The scalar optimal `psi_tilde`, always one.
    pub psi_tilde: f64,
}

/// Indices of the `n_sel` largest-magnitude residual entries, ties broken by
/// lower index first.
pub fn select_rows(residual: &DVector<f64>, n_sel: usize) -> Vec<usize> {
    assert!(n_sel >= 1 && n_sel <= residual.len(), "n_sel out of range");
    let mut order: Vec<usize> = (0..residual.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        residual[b]
            .abs()
            .total_cmp(&residual[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(n_sel);
    order
}

/// Extracts the local Jacobian and residual rows at the current reduced
/// solution. Only the selected rows are copied.
pub fn local_operators<M: FullModel + ?Sized>(
    model: &M,
    rom: &RomState,
    indices: &[usize],
) -> LocalOperators {
    let xhat = rom.reconstruct();
    let r = model.residual_at(&xhat);
    let j = model.jacobian_at(&xhat);
    extract_rows(&j, &r, indices)
}

/// Row extraction shared by [`local_operators`] and the tests that feed
/// explicit matrices.
pub fn extract_rows(j: &DMatrix<f64>, r: &DVector<f64>, indices: &[usize]) -> LocalOperators {
    let n_sel = indices.len();
    let mut jacobian_rows = DMatrix::zeros(n_sel, j.ncols());
    let mut residual_rows = DVector::zeros(n_sel);
    for (k, &i) in indices.iter().enumerate() {
        jacobian_rows.set_row(k, &j.row(i));
        residual_rows[k] = r[i];
    }
    LocalOperators {
        indices: indices.to_vec(),
        jacobian_rows,
        residual_rows,
    }
}

/// Derives the auxiliary vectors of the low-rank update from the reduced
/// solution and the local operators. The only factorization is of the
/// `n_sel x n_sel` Gram matrix `L_J L_J^T`.
pub fn auxiliary_update(
    q: &DVector<f64>,
    local: &LocalOperators,
) -> Result<AuxiliaryUpdate, AdaptiveError> {
    let d = q.norm();
    if d == 0.0 {
        return Err(AdaptiveError::ZeroRomSolution);
    }
    if local.residual_rows.norm() == 0.0 {
        return Err(AdaptiveError::ZeroLocalResidual);
    }
    let xi_tilde = -&local.residual_rows / d;
    let gram = &local.jacobian_rows * local.jacobian_rows.transpose();
    let (solved, fallback) =
        linalg::gram_solve(&gram, &xi_tilde).ok_or(AdaptiveError::RankDeficientLocalJacobian)?;
    if fallback {
        log::warn!("local Jacobian Gram matrix is rank deficient; using a pseudo-inverse");
    }
    let xi = local.jacobian_rows.transpose() * solved;
    let psi = q / d;
    Ok(AuxiliaryUpdate {
        xi,
        psi,
        magnitude: d,
        xi_tilde,
        psi_tilde: 1.0,
    })
}

/// The closed-form additional basis
/// `Psi = Phi - (1/d^2) L_J^T (L_J L_J^T)^{-1} L_r q^T`, an `N x n` block
/// whose linearized local residual vanishes by construction.
pub fn additional_basis_local(
    rom: &RomState,
    local: &LocalOperators,
) -> Result<DMatrix<f64>, AdaptiveError> {
    let aux = auxiliary_update(rom.q(), local)?;
    Ok(rom.basis() + &aux.xi * aux.psi.transpose())
}

/// The full least-squares enrichment: solves `J psi = r` at the current
/// reduced solution (dimension `N`) and returns `psi` as one column.
pub fn additional_basis_from<M: FullModel + ?Sized>(
    model: &M,
    rom: &RomState,
) -> Result<DMatrix<f64>, AdaptiveError> {
    let xhat = rom.reconstruct();
    let r = model.residual_at(&xhat);
    if r.norm() == 0.0 {
        return Err(AdaptiveError::ZeroLocalResidual);
    }
    let j = model.jacobian_at(&xhat);
    let psi = linalg::lu_solve(&j, &r).ok_or(AdaptiveError::SingularJacobian)?;
    Ok(DMatrix::from_column_slice(psi.len(), 1, psi.as_slice()))
}

/// Draws the next `count` vectors from the POD remainder pool.
pub fn additional_basis_pod(
    pool: &mut RemainderPool,
    count: usize,
) -> Result<DMatrix<f64>, AdaptiveError> {
    let available = pool.remaining();
    pool.take(count).ok_or(AdaptiveError::PoolExhausted {
        requested: count,
        available,
    })
}

/// Thin-QR extension of `[Phi Psi]` with relative column dropping; the span
/// of `Phi` is preserved and the result is orthonormal to 1e-10.
pub fn extend_and_orthonormalize(
    phi: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    drop_tol: f64,
) -> DMatrix<f64> {
    linalg::orthonormalize_with_drop(phi, psi, drop_tol)
}

/// Basis-cap policy: a basis that would exceed `max_modes` is replaced by
/// the initial dominant POD vectors; otherwise it passes through unchanged.
pub fn cap_reset(
    phi: &DMatrix<f64>,
    initial_basis: &DMatrix<f64>,
    max_modes: usize,
) -> DMatrix<f64> {
    if phi.ncols() > max_modes {
        initial_basis.clone()
    } else {
        phi.clone()
    }
}

/// Shared resources of an adaptive solve: the initial basis the cap policy
/// resets to, and (for pod-append) the remainder pool.
pub struct AdaptContext<'a> {
    pub initial_basis: &'a DMatrix<f64>,
    pub pool: Option<&'a mut RemainderPool>,
}

/// One adaptation round of the trace, serialized to JSON by the harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptRound {
    pub round: usize,
    pub strategy: Strategy,
    pub n_before: usize,
    pub n_after: usize,
    pub eps: f64,
    pub enrich_solve_dim: usize,
    pub wall_ns: u64,
}

/// Result of an adaptive solve.
#[derive(Debug)]
pub struct AdaptOutcome {
    pub state: RomState,
    /// Final full-model error.
    pub eps: f64,
    /// One record per adaptation round, in order.
    pub rounds: Vec<AdaptRound>,
    /// Whether `eps <= eps_fom` was reached.
    pub converged: bool,
    /// Total reduced Newton iterations across all solves.
    pub reduced_iterations: usize,
}

/// Runs the online adaptive solve: reduced Newton, full-error check, and
/// strategy-driven basis extension until `eps <= eps_fom`, the round budget
/// runs out, or a cap-reset cycle stops making progress.
pub fn adapt_loop<M: FullModel + ?Sized>(
    model: &M,
    mut rom: RomState,
    config: &AdaptiveConfig,
    ctx: &mut AdaptContext<'_>,
) -> Result<AdaptOutcome, AdaptiveError> {
    config.validate(model.dim())?;
    if rom.mode_count() > config.max_modes {
        return Err(AdaptiveError::InvalidConfig {
            what: "initial basis exceeds max_modes",
        });
    }

    let mut rounds: Vec<AdaptRound> = Vec::new();
    let mut reduced_iterations = 0usize;
    let first = reduced_newton(model, &mut rom, config.eps_rom, config.max_newton_iter)?;
    reduced_iterations += first.iterations;
    let mut eps = fom_error(model, &rom);
    // cycle guard: the error recorded when the cap last reset the basis
    let mut eps_at_last_reset: Option<f64> = None;

    loop {
        if eps <= config.eps_fom {
            return Ok(AdaptOutcome {
                state: rom,
                eps,
                rounds,
                converged: true,
                reduced_iterations,
            });
        }
        let budget_left = config.max_rounds.is_none_or(|max| rounds.len() < max);
        if !budget_left {
            return Err(AdaptiveError::AdaptationBudgetExhausted(Box::new(
                AdaptOutcome {
                    state: rom,
                    eps,
                    rounds,
                    converged: false,
                    reduced_iterations,
                },
            )));
        }

        let started = Instant::now();
        let n_before = rom.mode_count();
        let (candidate, used, solve_dim) =
            enrichment_candidate(model, &mut rom, config, ctx, &mut reduced_iterations)?;
        let extended = extend_and_orthonormalize(rom.basis(), &candidate, config.qr_drop_tol);
        let was_reset = extended.ncols() > config.max_modes;
        let next_basis = cap_reset(&extended, ctx.initial_basis, config.max_modes);
        rom.replace_basis(next_basis)?;
        let wall_ns = started.elapsed().as_nanos() as u64;

        let stalled_cycle =
            was_reset && eps_at_last_reset.is_some_and(|prev| eps >= prev * (1.0 - 1e-3));
        if was_reset {
            eps_at_last_reset = Some(eps);
        }

        let solve = reduced_newton(model, &mut rom, config.eps_rom, config.max_newton_iter)?;
        reduced_iterations += solve.iterations;
        eps = fom_error(model, &rom);
        rounds.push(AdaptRound {
            round: rounds.len(),
            strategy: used,
            n_before,
            n_after: rom.mode_count(),
            eps,
            enrich_solve_dim: solve_dim,
            wall_ns,
        });

        if stalled_cycle && eps > config.eps_fom {
            return Err(AdaptiveError::AdaptationBudgetExhausted(Box::new(
                AdaptOutcome {
                    state: rom,
                    eps,
                    rounds,
                    converged: false,
                    reduced_iterations,
                },
            )));
        }
    }
}

/// Computes the enrichment block for the configured strategy, together with
/// the strategy actually used (the zero-`q` fallback may switch to
/// pod-append) and the dimension of the linear solve it performed.
fn enrichment_candidate<M: FullModel + ?Sized>(
    model: &M,
    rom: &mut RomState,
    config: &AdaptiveConfig,
    ctx: &mut AdaptContext<'_>,
    reduced_iterations: &mut usize,
) -> Result<(DMatrix<f64>, Strategy, usize), AdaptiveError> {
    match config.strategy {
        Strategy::PodAppend => {
            let pool = ctx
                .pool
                .as_deref_mut()
                .ok_or(AdaptiveError::PoolExhausted {
                    requested: config.append_count,
                    available: 0,
                })?;
            let block = additional_basis_pod(pool, config.append_count)?;
            Ok((block, Strategy::PodAppend, 0))
        }
        Strategy::FRom => {
            let block = additional_basis_from(model, rom)?;
            Ok((block, Strategy::FRom, model.dim()))
        }
        Strategy::LocalOpt => {
            match local_candidate(model, rom, config) {
                Ok(block) => Ok((block, Strategy::LocalOpt, config.n_sel)),
                Err(AdaptiveError::ZeroRomSolution) => {
                    // nudge q with one plain reduced Newton step, then retry;
                    // the step may legitimately fail to move q
                    let before = *reduced_iterations;
                    if let Ok(out) = reduced_newton(model, rom, f64::MIN_POSITIVE, 1) {
                        *reduced_iterations = before + out.iterations;
                    } else {
                        *reduced_iterations = before + 1;
                    }
                    match local_candidate(model, rom, config) {
                        Ok(block) => Ok((block, Strategy::LocalOpt, config.n_sel)),
                        Err(AdaptiveError::ZeroRomSolution) => match ctx.pool.as_deref_mut() {
                            Some(pool) if pool.remaining() >= config.append_count => {
                                let block = additional_basis_pod(pool, config.append_count)?;
                                Ok((block, Strategy::PodAppend, 0))
                            }
                            _ => Err(AdaptiveError::ZeroRomSolution),
                        },
                        Err(e) => Err(e),
                    }
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn local_candidate<M: FullModel + ?Sized>(
    model: &M,
    rom: &RomState,
    config: &AdaptiveConfig,
) -> Result<DMatrix<f64>, AdaptiveError> {
    let xhat = rom.reconstruct();
    let residual = model.residual_at(&xhat);
    let indices = select_rows(&residual, config.n_sel);
    let local = extract_rows(&model.jacobian_at(&xhat), &residual, &indices);
    additional_basis_local(rom, &local)
}
