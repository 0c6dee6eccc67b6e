//! The full-order model contract and the dense Newton / backward-Euler
//! solver loops everything else consumes.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

/// A nonlinear full-order system in residual form, `r(x; mu) = 0`.
///
/// Implementations carry their parameter vector `mu` internally and must be
/// immutable after construction: `residual_at` and `jacobian_at` are pure
/// functions of the state, so a model can be shared across concurrent
/// solver instances.
pub trait FullModel: Sync {
    /// Number of unknowns `N`.
    fn dim(&self) -> usize;

    /// The residual `r(x; mu)`, length `N`.
    fn residual_at(&self, x: &DVector<f64>) -> DVector<f64>;

    /// The Jacobian `J(x; mu) = dr/dx`, dense `N x N`.
    fn jacobian_at(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// The reference configuration `xbar` a reduced model expands around
    /// (for steady problems the initial guess; for time-stepped problems
    /// the previous accepted state).
    fn reference_state(&self) -> DVector<f64>;

    /// The linearization constant `F = r(x) - J(x) (x - xbar)` of the
    /// Newton split `r = J Phi q + F` at the point `x`.
    ///
    /// Reconstructed from the two callbacks so that implementors only
    /// provide a residual and a Jacobian.
    fn linearization_constant(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.residual_at(x);
        let j = self.jacobian_at(x);
        let shift = x - self.reference_state();
        r - j * shift
    }
}

impl<M: FullModel + ?Sized> FullModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn residual_at(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).residual_at(x)
    }
    fn jacobian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).jacobian_at(x)
    }
    fn reference_state(&self) -> DVector<f64> {
        (**self).reference_state()
    }
}

/// Implicit time-step bookkeeping: the step size and the previous state.
#[derive(Debug, Clone)]
pub struct TimeStepper {
    dt: f64,
    previous: DVector<f64>,
}

impl TimeStepper {
    /// Creates a stepper; `dt` must be positive.
    pub fn new(dt: f64, previous: DVector<f64>) -> Result<Self, SolveError> {
        if !(dt > 0.0) {
            return Err(SolveError::InvalidParameter {
                what: "time step must be positive",
            });
        }
        Ok(Self { dt, previous })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn previous(&self) -> &DVector<f64> {
        &self.previous
    }

    /// Accepts `state` as the new previous state.
    pub fn advance(&mut self, state: DVector<f64>) {
        self.previous = state;
    }
}

/// Errors from the full-order solver loops.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "Newton did not converge after {iterations} iterations (residual norm {residual_norm:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
    },
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: &'static str },
}

/// A converged full-order Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonSolution {
    /// The converged state.
    pub state: DVector<f64>,
    /// Number of Newton updates applied.
    pub iterations: usize,
    /// Residual norms, one entry per iteration including the converged one.
    pub residual_history: Vec<f64>,
}

/// Solves `r(x) = 0` by a plain (undamped) Newton iteration with dense LU
/// linear solves, stopping once `||r(x)||_2 <= tol`.
pub fn newton_solve_full<M: FullModel + ?Sized>(
    model: &M,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonSolution, SolveError> {
    if x0.len() != model.dim() {
        return Err(SolveError::DimensionMismatch {
            expected: model.dim(),
            got: x0.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(SolveError::InvalidParameter {
            what: "tolerance must be positive",
        });
    }

    let mut x = x0.clone();
    let mut history = Vec::new();
    for iteration in 0..=max_iter {
        let r = model.residual_at(&x);
        let norm = r.norm();
        history.push(norm);
        if !norm.is_finite() {
            return Err(SolveError::NonConvergence {
                iterations: iteration,
                residual_norm: norm,
            });
        }
        if norm <= tol {
            return Ok(NewtonSolution {
                state: x,
                iterations: iteration,
                residual_history: history,
            });
        }
        if iteration == max_iter {
            break;
        }
        let j = model.jacobian_at(&x);
        let step = linalg::lu_solve(&j, &(-r)).ok_or(SolveError::SingularJacobian { iteration })?;
        x += step;
    }
    Err(SolveError::NonConvergence {
        iterations: max_iter,
        residual_norm: *history.last().unwrap(),
    })
}

/// The backward-Euler residual `(x - x_prev) - dt * f(x)` for a right-hand
/// side `f` evaluated at the new state.
pub fn backward_euler_residual<F>(
    rhs: F,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, SolveError>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if x.len() != x_prev.len() {
        return Err(SolveError::DimensionMismatch {
            expected: x.len(),
            got: x_prev.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(SolveError::InvalidParameter {
            what: "time step must be positive",
        });
    }
    let f = rhs(x);
    if f.len() != x.len() {
        return Err(SolveError::DimensionMismatch {
            expected: x.len(),
            got: f.len(),
        });
    }
    Ok((x - x_prev) - f * dt)
}

/// Largest relative mismatch between finite-difference directional
/// derivatives of the residual and Jacobian-vector products, over `samples`
/// random `(x, v)` pairs. Useful for validating hand-written Jacobians.
pub fn jacobian_consistency<M: FullModel + ?Sized>(model: &M, samples: usize, seed: u64) -> f64 {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let n = model.dim();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = model.reference_state() + DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.1));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let h = 1e-6 * x.norm().max(1.0);
        let jv = model.jacobian_at(&x) * &v;
        let fd = (model.residual_at(&(&x + &v * h)) - model.residual_at(&x)) / h;
        let denom = jv.norm();
        if denom > 0.0 {
            worst = worst.max((fd - jv).norm() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    /// r(x) = x - b: one Newton step solves it exactly.
    struct LinearShift {
        b: DVector<f64>,
    }

    impl FullModel for LinearShift {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn residual_at(&self, x: &DVector<f64>) -> DVector<f64> {
            x - &self.b
        }
        fn jacobian_at(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(self.b.len(), self.b.len())
        }
        fn reference_state(&self) -> DVector<f64> {
            DVector::zeros(self.b.len())
        }
    }

    #[test]
    fn linear_model_converges_in_one_iteration() {
        let model = LinearShift {
            b: DVector::from_vec(vec![1.0, -2.0, 0.5]),
        };
        let sol = newton_solve_full(&model, &DVector::zeros(3), 1e-12, 10).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!((sol.state - model.b).norm() < 1e-14);
    }

    #[test]
    fn nonconvergence_reports_final_residual() {
        let model = LinearShift {
            b: DVector::from_vec(vec![1.0, 1.0]),
        };
        let err = newton_solve_full(&model, &DVector::zeros(2), 1e-12, 0).unwrap_err();
        match err {
            SolveError::NonConvergence {
                iterations,
                residual_norm,
            } => {
                assert_eq!(iterations, 0);
                assert!((residual_norm - 2.0f64.sqrt()).abs() < 1e-12);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = LinearShift {
            b: DVector::from_vec(vec![1.0, 1.0]),
        };
        assert!(matches!(
            newton_solve_full(&model, &DVector::zeros(3), 1e-12, 5),
            Err(SolveError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn backward_euler_zero_dynamics() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let r = backward_euler_residual(|_| DVector::zeros(2), &x, &x, 0.1).unwrap();
        assert_eq!(r, DVector::zeros(2));
    }

    #[test]
    fn time_stepper_rejects_nonpositive_dt() {
        for dt in [0.0, -0.1, f64::NAN] {
            assert!(TimeStepper::new(dt, DVector::zeros(2)).is_err());
        }
        let mut stepper = TimeStepper::new(0.5, DVector::zeros(2)).unwrap();
        stepper.advance(DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(stepper.previous()[1], 2.0);
        assert_eq!(stepper.dt(), 0.5);
    }

    #[test]
    fn backward_euler_scalar_decay_step() {
        // f(x) = -x, x_prev = 1, dt = 1/2: the implicit step lands at 2/3,
        // where 2/3 - 1 + 0.5 * 2/3 = 0.
        let x = DVector::from_vec(vec![2.0 / 3.0]);
        let x_prev = DVector::from_vec(vec![1.0]);
        let r = backward_euler_residual(|x| -x.clone(), &x, &x_prev, 0.5).unwrap();
        assert!(r[0].abs() < 1e-15);
    }

    #[test]
    fn backward_euler_rejects_dimension_mismatch() {
        let x = DVector::from_vec(vec![1.0]);
        let x_prev = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            backward_euler_residual(|x| x.clone(), &x, &x_prev, 0.5),
            Err(SolveError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn singular_jacobian_is_detected() {
        struct Flat;
        impl FullModel for Flat {
            fn dim(&self) -> usize {
                2
            }
            fn residual_at(&self, x: &DVector<f64>) -> DVector<f64> {
                DVector::from_vec(vec![x[0] + x[1] - 1.0, 2.0 * (x[0] + x[1]) - 2.0])
            }
            fn jacobian_at(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0])
            }
            fn reference_state(&self) -> DVector<f64> {
                DVector::zeros(2)
            }
        }
        assert!(matches!(
            newton_solve_full(&Flat, &DVector::zeros(2), 1e-12, 5),
            Err(SolveError::SingularJacobian { iteration: 0 })
        ));
    }
}
