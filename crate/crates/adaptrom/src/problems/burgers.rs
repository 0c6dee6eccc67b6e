//! The 2-D coupled viscous Burgers problem on the unit square,
//! time-stepped with backward Euler and central (or optionally upwind)
//! finite differences. Boundary and initial values come from the closed-form
//! traveling-front field; the state stacks the `u` velocities before the
//! `v` velocities, interior nodes only.

use nalgebra::{DMatrix, DVector};

use super::{ProblemError, TransientProblem};
use crate::model::FullModel;

/// How the Reynolds-number parameter enters the equations.
///
/// `Verbatim` uses `Re` itself as the diffusion coefficient and divides the
/// front exponent by `32 Re`. `Physical` uses the conventional viscosity
/// `1/Re` with the front exponent multiplied by `Re / 32`; under this
/// convention the closed-form field is an exact solution of the PDE pair,
/// which makes it the right choice for grid-convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurgersConvention {
    Verbatim,
    Physical,
}

/// Coupled viscous Burgers flow with `2 * nx * ny` interior unknowns.
#[derive(Debug, Clone)]
pub struct BurgersProblem {
    nx: usize,
    ny: usize,
    re: f64,
    convention: BurgersConvention,
    dt: f64,
    t_end: f64,
    upwind: bool,
}

impl BurgersProblem {
    pub fn new(
        nx: usize,
        ny: usize,
        re: f64,
        convention: BurgersConvention,
        dt: f64,
        t_end: f64,
    ) -> Result<Self, ProblemError> {
        if nx == 0 || ny == 0 {
            return Err(ProblemError::InvalidParameter {
                what: "grid counts must be positive",
            });
        }
        if !(re > 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "Reynolds parameter must be positive",
            });
        }
        if !(dt > 0.0) || !(t_end > 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "time step and horizon must be positive",
            });
        }
        Ok(Self {
            nx,
            ny,
            re,
            convention,
            dt,
            t_end,
            upwind: false,
        })
    }

    /// Switches the advection discretization to first-order upwind.
    pub fn with_upwind(mut self, upwind: bool) -> Self {
        self.upwind = upwind;
        self
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn reynolds(&self) -> f64 {
        self.re
    }

    pub fn convention(&self) -> BurgersConvention {
        self.convention
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Diffusion coefficient under the active convention.
    pub fn viscosity(&self) -> f64 {
        match self.convention {
            BurgersConvention::Verbatim => self.re,
            BurgersConvention::Physical => 1.0 / self.re,
        }
    }

    fn spacing(&self) -> f64 {
        1.0 / (self.nx as f64 + 1.0)
    }

    fn field_len(&self) -> usize {
        self.nx * self.ny
    }

    /// The closed-form traveling-front velocities at `(x, y, t)`.
    pub fn analytic(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let s = -4.0 * x + 4.0 * y - t;
        match self.convention {
            BurgersConvention::Verbatim => {
                let b = 1.0 / (4.0 * (1.0 + (s / (32.0 * self.re)).exp()));
                (0.75 + b, 0.75 - b)
            }
            BurgersConvention::Physical => {
                let b = 1.0 / (4.0 * (1.0 + (s * self.re / 32.0).exp()));
                (0.75 - b, 0.75 + b)
            }
        }
    }

    /// The analytic field sampled on the interior nodes, stacked `[u; v]`.
    pub fn analytic_state(&self, t: f64) -> DVector<f64> {
        let nn = self.field_len();
        let h = self.spacing();
        let mut w = DVector::zeros(2 * nn);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (u, v) = self.analytic((i as f64 + 1.0) * h, (j as f64 + 1.0) * h, t);
                w[j * self.nx + i] = u;
                w[nn + j * self.nx + i] = v;
            }
        }
        w
    }

    /// Velocity component `comp` (0 for `u`, 1 for `v`) at grid offsets that
    /// may fall on the boundary, where the analytic field at time `t`
    /// provides the value.
    fn value_at(&self, w: &DVector<f64>, i: isize, j: isize, t: f64, comp: usize) -> f64 {
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            let h = self.spacing();
            let (u, v) = self.analytic((i as f64 + 1.0) * h, (j as f64 + 1.0) * h, t);
            if comp == 0 {
                u
            } else {
                v
            }
        } else {
            w[comp * self.field_len() + (j as usize) * self.nx + (i as usize)]
        }
    }

    /// Backward-Euler residual `(w - w_prev) - dt * f(w, t)` with boundary
    /// values injected from the analytic field at the new time level.
    pub fn step_residual(
        &self,
        w: &DVector<f64>,
        w_prev: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>, ProblemError> {
        let n = 2 * self.field_len();
        if w.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        if w_prev.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: w_prev.len(),
            });
        }
        if let Some(index) = w.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { index });
        }
        let f = self.rhs(w, t);
        Ok((w - w_prev) - f * self.dt)
    }

    /// Right-hand side `f(w, t)` of `w_t = f`: diffusion minus advection for
    /// both velocity components.
    fn rhs(&self, w: &DVector<f64>, t: f64) -> DVector<f64> {
        let nn = self.field_len();
        let h = self.spacing();
        let nu = self.viscosity();
        let mut f = DVector::zeros(2 * nn);
        for j in 0..self.ny as isize {
            for i in 0..self.nx as isize {
                let idx = (j as usize) * self.nx + (i as usize);
                let u = self.value_at(w, i, j, t, 0);
                let v = self.value_at(w, i, j, t, 1);
                for comp in 0..2 {
                    let c = self.value_at(w, i, j, t, comp);
                    let east = self.value_at(w, i + 1, j, t, comp);
                    let west = self.value_at(w, i - 1, j, t, comp);
                    let north = self.value_at(w, i, j + 1, t, comp);
                    let south = self.value_at(w, i, j - 1, t, comp);
                    let lap = (east - 2.0 * c + west + north - 2.0 * c + south) / (h * h);
                    let (ddx, ddy) = if self.upwind {
                        let ddx = if u >= 0.0 {
                            (c - west) / h
                        } else {
                            (east - c) / h
                        };
                        let ddy = if v >= 0.0 {
                            (c - south) / h
                        } else {
                            (north - c) / h
                        };
                        (ddx, ddy)
                    } else {
                        ((east - west) / (2.0 * h), (north - south) / (2.0 * h))
                    };
                    f[comp * nn + idx] = nu * lap - u * ddx - v * ddy;
                }
            }
        }
        f
    }

    /// Jacobian of [`Self::step_residual`] with respect to `w`.
    pub fn step_jacobian(&self, w: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let nn = self.field_len();
        let n = 2 * nn;
        let h = self.spacing();
        let nu = self.viscosity();
        let dt = self.dt;
        let mut jac = DMatrix::zeros(n, n);
        let interior = |i: isize, j: isize| -> Option<usize> {
            if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                None
            } else {
                Some((j as usize) * self.nx + (i as usize))
            }
        };
        for j in 0..self.ny as isize {
            for i in 0..self.nx as isize {
                let idx = (j as usize) * self.nx + (i as usize);
                let u = self.value_at(w, i, j, t, 0);
                let v = self.value_at(w, i, j, t, 1);
                for comp in 0..2 {
                    let row = comp * nn + idx;
                    let c = self.value_at(w, i, j, t, comp);
                    let east = self.value_at(w, i + 1, j, t, comp);
                    let west = self.value_at(w, i - 1, j, t, comp);
                    let north = self.value_at(w, i, j + 1, t, comp);
                    let south = self.value_at(w, i, j - 1, t, comp);

                    // derivatives of the advected gradient and of the
                    // advection velocity, split per stencil entry
                    let (ddx, ddy, dx_c, dx_e, dx_w, dy_c, dy_n, dy_s) = if self.upwind {
                        if u >= 0.0 && v >= 0.0 {
                            (
                                (c - west) / h,
                                (c - south) / h,
                                1.0 / h,
                                0.0,
                                -1.0 / h,
                                1.0 / h,
                                0.0,
                                -1.0 / h,
                            )
                        } else if u >= 0.0 {
                            (
                                (c - west) / h,
                                (north - c) / h,
                                1.0 / h,
                                0.0,
                                -1.0 / h,
                                -1.0 / h,
                                1.0 / h,
                                0.0,
                            )
                        } else if v >= 0.0 {
                            (
                                (east - c) / h,
                                (c - south) / h,
                                -1.0 / h,
                                1.0 / h,
                                0.0,
                                1.0 / h,
                                0.0,
                                -1.0 / h,
                            )
                        } else {
                            (
                                (east - c) / h,
                                (north - c) / h,
                                -1.0 / h,
                                1.0 / h,
                                0.0,
                                -1.0 / h,
                                1.0 / h,
                                0.0,
                            )
                        }
                    } else {
                        (
                            (east - west) / (2.0 * h),
                            (north - south) / (2.0 * h),
                            0.0,
                            1.0 / (2.0 * h),
                            -1.0 / (2.0 * h),
                            0.0,
                            1.0 / (2.0 * h),
                            -1.0 / (2.0 * h),
                        )
                    };

                    // df/d(c): diffusion diagonal, gradient stencils, and the
                    // advection velocity when it is this component
                    let mut dfdc = -4.0 * nu / (h * h) - u * dx_c - v * dy_c;
                    if comp == 0 {
                        dfdc -= ddx;
                    } else {
                        dfdc -= ddy;
                    }
                    jac[(row, comp * nn + idx)] = 1.0 - dt * dfdc;

                    // cross derivative: the other component advects this one
                    let other = 1 - comp;
                    let dcross = if comp == 0 { -ddy } else { -ddx };
                    jac[(row, other * nn + idx)] = -dt * dcross;

                    if let Some(k) = interior(i + 1, j) {
                        jac[(row, comp * nn + k)] = -dt * (nu / (h * h) - u * dx_e);
                    }
                    if let Some(k) = interior(i - 1, j) {
                        jac[(row, comp * nn + k)] = -dt * (nu / (h * h) - u * dx_w);
                    }
                    if let Some(k) = interior(i, j + 1) {
                        jac[(row, comp * nn + k)] = -dt * (nu / (h * h) - v * dy_n);
                    }
                    if let Some(k) = interior(i, j - 1) {
                        jac[(row, comp * nn + k)] = -dt * (nu / (h * h) - v * dy_s);
                    }
                }
            }
        }
        jac
    }
}

impl TransientProblem for BurgersProblem {
    type Step<'a> = BurgersStepModel<'a>;

    fn dim(&self) -> usize {
        2 * self.field_len()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn initial_state(&self) -> DVector<f64> {
        self.analytic_state(0.0)
    }

    fn step_model(&self, prev: DVector<f64>, t_new: f64) -> BurgersStepModel<'_> {
        BurgersStepModel {
            problem: self,
            prev,
            t: t_new,
        }
    }
}

/// One implicit Burgers step as a [`FullModel`].
pub struct BurgersStepModel<'a> {
    problem: &'a BurgersProblem,
    prev: DVector<f64>,
    t: f64,
}

impl FullModel for BurgersStepModel<'_> {
    fn dim(&self) -> usize {
        TransientProblem::dim(self.problem)
    }

    fn residual_at(&self, x: &DVector<f64>) -> DVector<f64> {
        self.problem
            .step_residual(x, &self.prev, self.t)
            .unwrap_or_else(|_| DVector::from_element(self.dim(), f64::INFINITY))
    }

    fn jacobian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.problem.step_jacobian(x, self.t)
    }

    fn reference_state(&self) -> DVector<f64> {
        self.prev.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::jacobian_consistency;

    fn problem(convention: BurgersConvention) -> BurgersProblem {
        BurgersProblem::new(6, 6, 50.0, convention, 1e-3, 1.0).unwrap()
    }

    #[test]
    fn diagonal_values_at_t_zero() {
        // On x = y at t = 0 the front exponent is zero, so the verbatim
        // field is exactly u = 7/8, v = 5/8.
        let p = problem(BurgersConvention::Verbatim);
        let (u, v) = p.analytic(0.3, 0.3, 0.0);
        assert_eq!(u, 0.875);
        assert_eq!(v, 0.625);
    }

    #[test]
    fn physical_convention_swaps_orientation() {
        let p = problem(BurgersConvention::Physical);
        let (u, v) = p.analytic(0.3, 0.3, 0.0);
        assert_eq!(u, 0.625);
        assert_eq!(v, 0.875);
        assert!((p.viscosity() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn reference_configuration_is_constructible() {
        // 50 subdivisions per axis (49x49 interior), dt = 1e-3 over the unit
        // time interval: 1000 implicit steps
        let p = BurgersProblem::new(49, 49, 50.0, BurgersConvention::Verbatim, 1e-3, 1.0).unwrap();
        assert_eq!(TransientProblem::dim(&p), 2 * 49 * 49);
        assert_eq!(p.step_count(), 1000);
    }

    #[test]
    fn residual_rejects_non_finite_state() {
        let p = problem(BurgersConvention::Verbatim);
        let mut w = p.initial_state();
        let prev = w.clone();
        w[3] = f64::NAN;
        assert!(matches!(
            p.step_residual(&w, &prev, 0.1),
            Err(ProblemError::NonFinite { index: 3 })
        ));
    }

    #[test]
    fn residual_rejects_dimension_mismatch() {
        let p = problem(BurgersConvention::Verbatim);
        let w = DVector::zeros(10);
        let prev = p.initial_state();
        assert!(matches!(
            p.step_residual(&w, &prev, 0.1),
            Err(ProblemError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn step_jacobian_matches_finite_differences() {
        for convention in [BurgersConvention::Verbatim, BurgersConvention::Physical] {
            let p = problem(convention);
            let model = p.step_model(p.initial_state(), p.dt);
            assert!(jacobian_consistency(&model, 20, 7) <= 1e-4);
        }
    }

    #[test]
    fn upwind_jacobian_matches_finite_differences() {
        let p = problem(BurgersConvention::Physical).with_upwind(true);
        let model = p.step_model(p.initial_state(), p.dt);
        assert!(jacobian_consistency(&model, 20, 11) <= 1e-4);
    }

    #[test]
    fn implicit_step_tracks_analytic_field() {
        // One backward-Euler step from the exact initial field stays close
        // to the analytic field at t = dt.
        use crate::model::newton_solve_full;
        let p = problem(BurgersConvention::Physical);
        let model = p.step_model(p.initial_state(), p.dt);
        let sol = newton_solve_full(&model, &p.initial_state(), 1e-12, 20).unwrap();
        let err = (sol.state - p.analytic_state(p.dt)).amax();
        assert!(err < 1e-3, "one-step error too large: {err}");
    }
}
