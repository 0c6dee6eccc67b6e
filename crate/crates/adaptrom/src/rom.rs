//! The Galerkin reduced-order solve: projecting the residual onto the trial
//! basis, running Newton in the reduced coordinates, and measuring how far
//! the reconstructed solution is from solving the full model.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::model::FullModel;

/// Orthonormality defect tolerated in a trial basis.
const BASIS_ORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("reduced Newton did not converge after {iterations} iterations (projected residual norm {reduced_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        reduced_norm: f64,
    },
    #[error("singular reduced Jacobian at iteration {iteration}")]
    SingularReducedJacobian { iteration: usize },
    #[error("trial basis is not orthonormal (defect {defect:.3e})")]
    BasisNotOrthonormal { defect: f64 },
    #[error("trial basis must have at least one column")]
    EmptyBasis,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A reduced-order state: orthonormal trial basis `Phi`, reference `xbar`,
/// and reduced coordinates `q`. The approximate solution is always
/// recomputed as `xhat = xbar + Phi q`, never cached.
#[derive(Debug, Clone)]
pub struct RomState {
    basis: DMatrix<f64>,
    reference: DVector<f64>,
    q: DVector<f64>,
}

impl RomState {
    /// Creates a state with `q = 0`, validating basis shape and
    /// orthonormality.
    pub fn new(basis: DMatrix<f64>, reference: DVector<f64>) -> Result<Self, RomError> {
        if basis.ncols() == 0 {
            return Err(RomError::EmptyBasis);
        }
        if basis.nrows() != reference.len() {
            return Err(RomError::DimensionMismatch {
                expected: reference.len(),
                got: basis.nrows(),
            });
        }
        let defect = linalg::orthonormality_defect(&basis);
        if defect > BASIS_ORTHO_TOL {
            return Err(RomError::BasisNotOrthonormal { defect });
        }
        let q = DVector::zeros(basis.ncols());
        Ok(Self {
            basis,
            reference,
            q,
        })
    }

    /// Like [`RomState::new`] but with explicit reduced coordinates.
    pub fn with_coordinates(
        basis: DMatrix<f64>,
        reference: DVector<f64>,
        q: DVector<f64>,
    ) -> Result<Self, RomError> {
        if q.len() != basis.ncols() {
            return Err(RomError::DimensionMismatch {
                expected: basis.ncols(),
                got: q.len(),
            });
        }
        let mut state = Self::new(basis, reference)?;
        state.q = q;
        Ok(state)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// Basis width `n`.
    pub fn mode_count(&self) -> usize {
        self.basis.ncols()
    }

    /// Magnitude `d = ||q||_2` of the reduced solution.
    pub fn magnitude(&self) -> f64 {
        self.q.norm()
    }

    /// The reconstructed approximate solution `xhat = xbar + Phi q`.
    pub fn reconstruct(&self) -> DVector<f64> {
        &self.reference + &self.basis * &self.q
    }

    /// Replaces the trial basis and resets `q` to zero. The new basis must
    /// pass the same validation as in [`RomState::new`].
    pub fn replace_basis(&mut self, basis: DMatrix<f64>) -> Result<(), RomError> {
        if basis.ncols() == 0 {
            return Err(RomError::EmptyBasis);
        }
        if basis.nrows() != self.reference.len() {
            return Err(RomError::DimensionMismatch {
                expected: self.reference.len(),
                got: basis.nrows(),
            });
        }
        let defect = linalg::orthonormality_defect(&basis);
        if defect > BASIS_ORTHO_TOL {
            return Err(RomError::BasisNotOrthonormal { defect });
        }
        self.q = DVector::zeros(basis.ncols());
        self.basis = basis;
        Ok(())
    }
}

/// Iteration log of a reduced Newton solve.
#[derive(Debug, Clone)]
pub struct ReducedNewtonOutcome {
    pub iterations: usize,
    /// `||Phi^T r||` per iteration, including the converged value.
    pub reduced_residual_norms: Vec<f64>,
}

/// Newton iteration on the reduced coordinates: each step solves
/// `(Phi^T J Phi) dq = -Phi^T r` in dimension `n`, until
/// `||Phi^T r||_2 <= eps_rom`.
pub fn reduced_newton<M: FullModel + ?Sized>(
    model: &M,
    rom: &mut RomState,
    eps_rom: f64,
    max_iter: usize,
) -> Result<ReducedNewtonOutcome, RomError> {
    if rom.reference.len() != model.dim() {
        return Err(RomError::DimensionMismatch {
            expected: model.dim(),
            got: rom.reference.len(),
        });
    }
    let phi = rom.basis.clone();
    let mut norms = Vec::new();
    for iteration in 0..=max_iter {
        let xhat = rom.reconstruct();
        let r = model.residual_at(&xhat);
        let reduced = phi.transpose() * &r;
        let norm = reduced.norm();
        norms.push(norm);
        if !norm.is_finite() {
            return Err(RomError::NonConvergence {
                iterations: iteration,
                reduced_norm: norm,
            });
        }
        if norm <= eps_rom {
            return Ok(ReducedNewtonOutcome {
                iterations: iteration,
                reduced_residual_norms: norms,
            });
        }
        if iteration == max_iter {
            break;
        }
        let j = model.jacobian_at(&xhat);
        let reduced_jac = phi.transpose() * (&j * &phi);
        let step = linalg::lu_solve(&reduced_jac, &(-reduced))
            .ok_or(RomError::SingularReducedJacobian { iteration })?;
        rom.q += step;
    }
    Err(RomError::NonConvergence {
        iterations: max_iter,
        reduced_norm: *norms.last().unwrap(),
    })
}

/// The full-model error `eps = ||r(xbar + Phi q)||_2` of the current
/// reduced solution.
pub fn fom_error<M: FullModel + ?Sized>(model: &M, rom: &RomState) -> f64 {
    model.residual_at(&rom.reconstruct()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::newton_solve_full;
    use crate::problems::BratuProblem;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    struct LinearModel {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl FullModel for LinearModel {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn residual_at(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.a * x - &self.b
        }
        fn jacobian_at(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            self.a.clone()
        }
        fn reference_state(&self) -> DVector<f64> {
            DVector::zeros(self.b.len())
        }
    }

    fn random_orthonormal(rng: &mut StdRng, n: usize, k: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }

    #[test]
    fn identity_basis_reproduces_full_newton() {
        let p = BratuProblem::new(5, 5, 2.0, 0.25).unwrap();
        let full = newton_solve_full(&p, &p.reference_state(), 1e-11, 30).unwrap();

        let mut rom = RomState::new(DMatrix::identity(25, 25), p.reference_state()).unwrap();
        let out = reduced_newton(&p, &mut rom, 1e-11, 30).unwrap();
        assert_eq!(out.iterations, full.iterations);
        assert!((rom.reconstruct() - full.state).norm() < 1e-9);
    }

    #[test]
    fn linear_model_projects_in_one_iteration() {
        // r = x - b with orthonormal Phi: q = Phi^T b after one step and the
        // projected residual vanishes.
        let mut rng = StdRng::seed_from_u64(5);
        let n = 12;
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearModel {
            a: DMatrix::identity(n, n),
            b: b.clone(),
        };
        let phi = random_orthonormal(&mut rng, n, 4);
        let mut rom = RomState::new(phi.clone(), DVector::zeros(n)).unwrap();
        let out = reduced_newton(&model, &mut rom, 1e-12, 5).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((rom.q() - phi.transpose() * &b).norm() < 1e-12);
        let projected = phi.transpose() * model.residual_at(&rom.reconstruct());
        assert!(projected.norm() < 1e-12);
    }

    #[test]
    fn fom_error_matches_direct_evaluation() {
        let mut rng = StdRng::seed_from_u64(9);
        let n = 10;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
            + DMatrix::identity(n, n) * 4.0;
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearModel {
            a: a.clone(),
            b: b.clone(),
        };
        let phi = random_orthonormal(&mut rng, n, 3);
        let mut rom = RomState::new(phi, DVector::zeros(n)).unwrap();
        reduced_newton(&model, &mut rom, 1e-12, 10).unwrap();
        let eps = fom_error(&model, &rom);
        let direct = (&a * rom.reconstruct() - &b).norm();
        assert!((eps - direct).abs() < 1e-13);
    }

    #[test]
    fn exact_solution_has_tiny_fom_error() {
        let p = BratuProblem::new(5, 5, 1.0, 0.25).unwrap();
        let full = newton_solve_full(&p, &p.reference_state(), 1e-12, 30).unwrap();
        // basis containing the exact deviation direction
        let dev = &full.state - p.reference_state();
        let phi = DMatrix::from_column_slice(25, 1, dev.normalize().as_slice());
        let mut rom = RomState::new(phi, p.reference_state()).unwrap();
        reduced_newton(&p, &mut rom, 1e-12, 30).unwrap();
        assert!(fom_error(&p, &rom) < 1e-9);
    }

    #[test]
    fn galerkin_orthogonality_gap() {
        // at convergence the projected residual meets eps_rom while the full
        // error may stay large; that gap is what triggers adaptation
        let mut rng = StdRng::seed_from_u64(13);
        let n = 20;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
            + DMatrix::identity(n, n) * 5.0;
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let model = LinearModel { a, b };
        let phi = random_orthonormal(&mut rng, n, 2);
        let mut rom = RomState::new(phi.clone(), DVector::zeros(n)).unwrap();
        reduced_newton(&model, &mut rom, 1e-10, 10).unwrap();
        let projected = (phi.transpose() * model.residual_at(&rom.reconstruct())).amax();
        assert!(projected <= 1e-10);
        assert!(fom_error(&model, &rom) > 1e-3);
    }

    #[test]
    fn appending_a_vector_never_hurts_least_squares() {
        // subspace monotonicity of the best-achievable residual on a linear
        // model: min_q ||A Phi q - b|| cannot grow when Phi gains a column
        let mut rng = StdRng::seed_from_u64(21);
        let n = 15;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
            + DMatrix::identity(n, n) * 5.0;
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let phi = random_orthonormal(&mut rng, n, 3);

        let least_squares_eps = |basis: &DMatrix<f64>| -> f64 {
            let m = &a * basis;
            let gram = m.transpose() * &m;
            let rhs = m.transpose() * &b;
            let q = gram.lu().solve(&rhs).unwrap();
            (m * q - &b).norm()
        };

        let eps_small = least_squares_eps(&phi);
        for _ in 0..5 {
            let extra = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let grown = crate::linalg::orthonormalize_with_drop(
                &phi,
                &DMatrix::from_column_slice(n, 1, extra.as_slice()),
                1e-12,
            );
            let eps_big = least_squares_eps(&grown);
            assert!(eps_big <= eps_small * (1.0 + 1e-9));
        }
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let mut basis = DMatrix::identity(4, 2);
        basis[(0, 1)] = 1.0; // columns no longer orthonormal
        assert!(matches!(
            RomState::new(basis, DVector::zeros(4)),
            Err(RomError::BasisNotOrthonormal { .. })
        ));
        assert!(matches!(
            RomState::new(DMatrix::zeros(4, 0), DVector::zeros(4)),
            Err(RomError::EmptyBasis)
        ));
    }
}
