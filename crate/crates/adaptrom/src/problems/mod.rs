//! Concrete full-order testbeds: the 2-D Bratu problem, coupled viscous
//! Burgers flow, and nonlinear heat conduction on a rectangular grid.

mod bratu;
mod burgers;
mod heat;

pub use bratu::BratuProblem;
pub use burgers::{BurgersConvention, BurgersProblem, BurgersStepModel};
pub use heat::{BurstSchedule, HeatGridProblem, HeatStepModel};

use nalgebra::DVector;
use thiserror::Error;

use crate::model::FullModel;

/// Errors raised by problem construction and residual evaluation.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("exp({value:.3e}) overflows the residual (divergent iterate)")]
    OverflowGuard { value: f64 },
    #[error("initial-guess logarithm argument {value:.3e} is not positive")]
    LogDomain { value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite field value at index {index}")]
    NonFinite { index: usize },
    #[error("conductivity {value:.3e} is not positive at temperature {temperature:.3e}")]
    NegativeConductivity { value: f64, temperature: f64 },
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: &'static str },
}

/// A time-dependent problem that produces one implicit-step [`FullModel`]
/// per time level. The step model's reference state is the previous
/// accepted state.
pub trait TransientProblem: Sync {
    /// The per-step full model type.
    type Step<'a>: FullModel
    where
        Self: 'a;

    /// Number of unknowns.
    fn dim(&self) -> usize;

    /// Time-step size.
    fn dt(&self) -> f64;

    /// State at `t = 0`.
    fn initial_state(&self) -> DVector<f64>;

    /// The backward-Euler step model advancing `prev` to time `t_new`.
    fn step_model(&self, prev: DVector<f64>, t_new: f64) -> Self::Step<'_>;
}
