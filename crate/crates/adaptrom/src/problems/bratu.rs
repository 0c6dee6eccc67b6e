//! The 2-D Liouville–Bratu–Gelfand problem on the unit square,
//! `laplace(u) + lambda * exp(u) = 0` with `u = 0` on the boundary,
//! discretized by the 5-point second-order stencil on interior nodes.

use nalgebra::{DMatrix, DVector};

use super::ProblemError;
use crate::model::FullModel;

/// Largest exponential the residual will evaluate before flagging the
/// iterate as divergent.
const EXP_OVERFLOW: f64 = 1e300;

/// The Bratu problem with `nx * ny` interior unknowns.
///
/// Below the critical transition value `lambda_c ~= 6.808124223` the problem
/// has a lower and an upper solution; the initial-guess exponent `a` selects
/// the branch a Newton iteration lands on (`0.25` lower, `1.25` upper,
/// `0.75` near-critical).
#[derive(Debug, Clone)]
pub struct BratuProblem {
    nx: usize,
    ny: usize,
    lambda: f64,
    guess_exponent: f64,
    initial_guess: DVector<f64>,
}

impl BratuProblem {
    /// Critical transition parameter of the continuous problem.
    pub const LAMBDA_CRITICAL: f64 = 6.808124223;

    /// Alternative critical value reported alongside the primary one in the
    /// literature; kept for experiments that want to probe the fold from
    /// slightly different sides. Note that on coarse grids the *discrete*
    /// fold sits below either value and plain Newton stops converging there.
    pub const LAMBDA_CRITICAL_ALT: f64 = 6.8083545;

    pub fn new(
        nx: usize,
        ny: usize,
        lambda: f64,
        guess_exponent: f64,
    ) -> Result<Self, ProblemError> {
        if nx == 0 || ny == 0 {
            return Err(ProblemError::InvalidParameter {
                what: "grid counts must be positive",
            });
        }
        if !(lambda >= 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "lambda must be nonnegative",
            });
        }
        if !(guess_exponent > 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "initial-guess exponent must be positive",
            });
        }
        let initial_guess = initial_guess_field(nx, ny, guess_exponent)?;
        Ok(Self {
            nx,
            ny,
            lambda,
            guess_exponent,
            initial_guess,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn guess_exponent(&self) -> f64 {
        self.guess_exponent
    }

    /// Coordinates of interior node `idx` (row-major over `j`, then `i`).
    pub fn node_coords(&self, idx: usize) -> (f64, f64) {
        let hx = 1.0 / (self.nx as f64 + 1.0);
        let hy = 1.0 / (self.ny as f64 + 1.0);
        let i = idx % self.nx;
        let j = idx / self.nx;
        ((i as f64 + 1.0) * hx, (j as f64 + 1.0) * hy)
    }

    /// The 5-point residual `laplace(u) + lambda * exp(u)` at every interior
    /// node, with homogeneous Dirichlet boundary values.
    pub fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        let n = self.nx * self.ny;
        if u.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let hx2 = (self.nx as f64 + 1.0).powi(2);
        let hy2 = (self.ny as f64 + 1.0).powi(2);
        let mut r = DVector::zeros(n);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let idx = j * self.nx + i;
                let c = u[idx];
                let e = c.exp();
                if e > EXP_OVERFLOW {
                    return Err(ProblemError::OverflowGuard { value: c });
                }
                let west = if i > 0 { u[idx - 1] } else { 0.0 };
                let east = if i + 1 < self.nx { u[idx + 1] } else { 0.0 };
                let south = if j > 0 { u[idx - self.nx] } else { 0.0 };
                let north = if j + 1 < self.ny {
                    u[idx + self.nx]
                } else {
                    0.0
                };
                r[idx] = (east - 2.0 * c + west) * hx2
                    + (north - 2.0 * c + south) * hy2
                    + self.lambda * e;
            }
        }
        Ok(r)
    }

    pub fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>, ProblemError> {
        let n = self.nx * self.ny;
        if u.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let hx2 = (self.nx as f64 + 1.0).powi(2);
        let hy2 = (self.ny as f64 + 1.0).powi(2);
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let idx = j * self.nx + i;
                jac[(idx, idx)] = -2.0 * (hx2 + hy2) + self.lambda * u[idx].exp();
                if i > 0 {
                    jac[(idx, idx - 1)] = hx2;
                }
                if i + 1 < self.nx {
                    jac[(idx, idx + 1)] = hx2;
                }
                if j > 0 {
                    jac[(idx, idx - self.nx)] = hy2;
                }
                if j + 1 < self.ny {
                    jac[(idx, idx + self.nx)] = hy2;
                }
            }
        }
        Ok(jac)
    }

    /// The branch-selecting initial guess
    /// `u0(x, y) = -2 ln(2 - (1 + x - x^2)^a (1 + y - y^2)^a)`
    /// sampled at the interior nodes.
    pub fn initial_guess(&self, a: f64) -> Result<DVector<f64>, ProblemError> {
        initial_guess_field(self.nx, self.ny, a)
    }
}

fn initial_guess_field(nx: usize, ny: usize, a: f64) -> Result<DVector<f64>, ProblemError> {
    if !(a > 0.0) {
        return Err(ProblemError::InvalidParameter {
            what: "initial-guess exponent must be positive",
        });
    }
    let hx = 1.0 / (nx as f64 + 1.0);
    let hy = 1.0 / (ny as f64 + 1.0);
    let mut u = DVector::zeros(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 1.0) * hx;
            let y = (j as f64 + 1.0) * hy;
            let arg = 2.0 - (1.0 + x - x * x).powf(a) * (1.0 + y - y * y).powf(a);
            if !(arg > 0.0) {
                return Err(ProblemError::LogDomain { value: arg });
            }
            u[j * nx + i] = -2.0 * arg.ln();
        }
    }
    Ok(u)
}

impl FullModel for BratuProblem {
    fn dim(&self) -> usize {
        self.nx * self.ny
    }

    fn residual_at(&self, x: &DVector<f64>) -> DVector<f64> {
        // A divergent iterate surfaces as an infinite residual norm, which
        // the solvers report as non-convergence.
        self.residual(x)
            .unwrap_or_else(|_| DVector::from_element(self.dim(), f64::INFINITY))
    }

    fn jacobian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian(x)
            .unwrap_or_else(|_| DMatrix::from_element(self.dim(), self.dim(), f64::INFINITY))
    }

    fn reference_state(&self) -> DVector<f64> {
        self.initial_guess.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{jacobian_consistency, newton_solve_full};

    #[test]
    fn zero_field_zero_lambda_gives_zero_residual() {
        let p = BratuProblem::new(5, 4, 0.0, 0.25).unwrap();
        let r = p.residual(&DVector::zeros(20)).unwrap();
        assert_eq!(r, DVector::zeros(20));
    }

    #[test]
    fn unit_source_on_flat_field() {
        // 3x3 interior grid, u = 0, lambda = 1: Laplacian vanishes and the
        // source term is exp(0) = 1 everywhere.
        let p = BratuProblem::new(3, 3, 1.0, 0.25).unwrap();
        let r = p.residual(&DVector::zeros(9)).unwrap();
        for v in r.iter() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_guess_vanishes_on_boundary_factor() {
        // At x = 0 the factor (1 + x - x^2)^a is 1, so a node placed there
        // would evaluate to -2 ln(1) = 0; check via direct evaluation.
        for a in [0.25, 0.75, 1.25] {
            let arg: f64 = 2.0 - 1.0f64.powf(a) * 1.0f64.powf(a);
            assert_eq!(-2.0 * arg.ln(), 0.0);
        }
    }

    #[test]
    fn initial_guess_center_value() {
        // a = 1 at (0.5, 0.5): u0 = -2 ln(2 - 1.25^2) = -2 ln(0.4375),
        // frozen from an independent high-precision evaluation.
        let p = BratuProblem::new(9, 9, 1.0, 1.0).unwrap();
        let u = p.initial_guess(1.0).unwrap();
        let center = 4 * 9 + 4; // node at (0.5, 0.5) on the 9x9 interior grid
        assert!((u[center] - 1.6533571463689359).abs() < 1e-12);
    }

    #[test]
    fn log_domain_error_for_large_exponent() {
        // (1.25)^(2a) >= 2 once a >~ 1.553; the guess is undefined there.
        assert!(matches!(
            BratuProblem::new(9, 9, 1.0, 2.0),
            Err(ProblemError::LogDomain { .. })
        ));
    }

    #[test]
    fn overflow_guard_triggers() {
        let p = BratuProblem::new(2, 2, 1.0, 0.25).unwrap();
        let u = DVector::from_element(4, 800.0);
        assert!(matches!(
            p.residual(&u),
            Err(ProblemError::OverflowGuard { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = BratuProblem::new(6, 5, 2.0, 0.25).unwrap();
        assert!(jacobian_consistency(&p, 20, 42) <= 1e-4);
    }

    #[test]
    fn lambda_zero_solves_immediately_from_zero() {
        let p = BratuProblem::new(4, 4, 0.0, 0.25).unwrap();
        let sol = newton_solve_full(&p, &DVector::zeros(16), 1e-12, 5).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.state, DVector::zeros(16));
    }

    #[test]
    fn lower_branch_fixed_point_is_stable() {
        // Solve from the lower-branch guess, then re-solve from a perturbed
        // start; both must land on the same root.
        let p = BratuProblem::new(20, 20, 3.0, 0.25).unwrap();
        let sol = newton_solve_full(&p, &p.reference_state(), 1e-10, 50).unwrap();
        assert!(p.residual(&sol.state).unwrap().norm() <= 1e-10);

        let perturbed = &sol.state
            + DVector::from_fn(sol.state.len(), |i, _| {
                1e-3 * ((i * 2654435761) % 97) as f64 / 97.0
            });
        let again = newton_solve_full(&p, &perturbed, 1e-10, 50).unwrap();
        assert!((again.state - &sol.state).norm() <= 1e-8);
    }

    #[test]
    fn newton_tail_contracts_superlinearly() {
        let p = BratuProblem::new(20, 20, 3.0, 0.25).unwrap();
        let sol = newton_solve_full(&p, &p.reference_state(), 1e-12, 50).unwrap();
        let hist = &sol.residual_history;
        let mut checked = 0;
        for w in hist.windows(2) {
            if w[0] < 1e-4 && w[1] > 0.0 {
                assert!(
                    w[1] <= w[0].powf(1.5),
                    "tail not superlinear: {} -> {}",
                    w[0],
                    w[1]
                );
                checked += 1;
            }
        }
        assert!(checked >= 1, "no tail iterations below 1e-4 observed");
    }
}
