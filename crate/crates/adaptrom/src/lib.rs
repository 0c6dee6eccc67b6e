//! Online adaptive basis construction for nonlinear projection-based
//! reduced-order models.
//!
//! The crate solves parametrized nonlinear systems `r(x; mu) = 0` twice over:
//! once at full order with a dense Newton method, and once in a small
//! subspace via Galerkin projection, `Phi^T r(xbar + Phi q) = 0`. When the
//! reduced solution is not good enough — the full residual norm
//! `eps = ||r(xhat)||` stays above a tolerance — the trial basis `Phi` is
//! enlarged *online* by one of three strategies:
//!
//! - **pod-append**: append the next unused POD vectors,
//! - **f-rom**: append the minimizer of `||J psi - r||`, a full-dimension
//!   linear solve,
//! - **local-opt**: append the closed-form low-rank update
//!   `Psi = Phi - (1/d^2) L_J^T (L_J L_J^T)^{-1} L_r q^T` built from a handful
//!   of residual rows, so the only factorization is a small Gram matrix.
//!
//! Three finite-difference testbeds (the 2-D Bratu problem, coupled viscous
//! Burgers flow, and nonlinear heat conduction on a grid) exercise the
//! machinery end to end; [`march`] drives the time-dependent ones.
//!
//! ```
//! use adaptrom::model::{newton_solve_full, FullModel};
//! use adaptrom::problems::BratuProblem;
//!
//! let problem = BratuProblem::new(8, 8, 1.5, 0.25).unwrap();
//! let sol = newton_solve_full(&problem, &problem.reference_state(), 1e-10, 25).unwrap();
//! assert!(problem.residual_at(&sol.state).norm() <= 1e-10);
//! ```

// validation deliberately writes `!(x > 0.0)` so that NaN fails alongside
// out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
mod linalg;
pub mod march;
pub mod model;
pub mod pod;
pub mod problems;
pub mod rom;

pub use adaptive::{adapt_loop, AdaptOutcome, AdaptiveConfig, Strategy};
pub use model::FullModel;
pub use pod::{pod_compute, PodBasis, SnapshotMatrix};
pub use rom::RomState;
