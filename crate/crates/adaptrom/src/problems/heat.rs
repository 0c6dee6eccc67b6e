//! Nonlinear transient heat conduction on a rectangular grid with a
//! temperature-dependent conductivity `k(T) = k0 + k1 T`, a Dirichlet edge
//! held at a fixed temperature, and a burst load applied to a set of nodes.
//!
//! The capacitance matrix is lumped (diagonal), the conductivity operator is
//! assembled in flux form on the 5-point stencil with arithmetic-mean edge
//! conductivities, and time stepping is backward Euler.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ProblemError, TransientProblem};
use crate::model::FullModel;

/// A seeded piecewise-constant burst signal: alternating on-windows with
/// uniform random amplitudes up to `max_amplitude`, and off-windows at zero.
/// The amplitude is a deterministic function of `(t, seed)`.
#[derive(Debug, Clone)]
pub struct BurstSchedule {
    seed: u64,
    max_amplitude: f64,
    on_duration: f64,
    off_duration: f64,
    /// Amplitude of the first on-window, when it should be shared between
    /// otherwise independent schedules (e.g. snapshot vs. evaluation runs).
    initial_amplitude: Option<f64>,
}

impl BurstSchedule {
    pub fn new(
        seed: u64,
        max_amplitude: f64,
        on_duration: f64,
        off_duration: f64,
    ) -> Result<Self, ProblemError> {
        if !(max_amplitude >= 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "burst amplitude must be nonnegative",
            });
        }
        if !(on_duration > 0.0) || !(off_duration >= 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "burst window durations must be positive",
            });
        }
        Ok(Self {
            seed,
            max_amplitude,
            on_duration,
            off_duration,
            initial_amplitude: None,
        })
    }

    /// Pins the first on-window amplitude to a fixed value.
    pub fn with_initial_amplitude(mut self, amplitude: f64) -> Self {
        self.initial_amplitude = Some(amplitude);
        self
    }

    pub fn max_amplitude(&self) -> f64 {
        self.max_amplitude
    }

    /// The load amplitude at time `t`; zero inside off-windows.
    pub fn amplitude(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let period = self.on_duration + self.off_duration;
        let window = (t / period).floor() as u64;
        let phase = t - window as f64 * period;
        if phase >= self.on_duration {
            return 0.0;
        }
        if window == 0 {
            if let Some(a) = self.initial_amplitude {
                return a;
            }
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ window.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        rng.random_range(0.0..=self.max_amplitude)
    }
}

/// Transient nonlinear heat conduction on an `nx * ny` node grid.
///
/// The bottom row (`j = 0`) is held at the Dirichlet temperature; all other
/// boundary faces are insulated. Unknowns are the remaining
/// `nx * (ny - 1)` nodes. Two probe nodes mark where results are observed.
#[derive(Debug, Clone)]
pub struct HeatGridProblem {
    nx: usize,
    ny: usize,
    density: f64,
    specific_heat: f64,
    k0: f64,
    k1: f64,
    dt: f64,
    t_end: f64,
    dirichlet_temp: f64,
    initial_temp: f64,
    schedule: BurstSchedule,
    load_nodes: Vec<usize>,
    probe_a: usize,
    probe_b: usize,
}

impl HeatGridProblem {
    /// Builds the problem with the reference material values
    /// (`rho = 500`, `c = 200`, `k(T) = 303.15 + 0.3 T`, boundary at 25 °C)
    /// and default load/probe layout: the load spans the middle third of the
    /// top row, probe A sits at the grid center, probe B just below the load.
    pub fn new(
        nx: usize,
        ny: usize,
        dt: f64,
        t_end: f64,
        schedule: BurstSchedule,
    ) -> Result<Self, ProblemError> {
        if nx < 2 || ny < 2 {
            return Err(ProblemError::InvalidParameter {
                what: "grid needs at least 2 nodes per axis",
            });
        }
        if !(dt > 0.0) || !(t_end > 0.0) {
            return Err(ProblemError::InvalidParameter {
                what: "time step and horizon must be positive",
            });
        }
        let unknowns_per_row = nx;
        let rows = ny - 1;
        let top_row_start = (rows - 1) * unknowns_per_row;
        let load_nodes: Vec<usize> = (nx / 3..(2 * nx) / 3).map(|i| top_row_start + i).collect();
        let probe_a = (rows / 2) * unknowns_per_row + nx / 2;
        let probe_b = top_row_start.saturating_sub(unknowns_per_row) + nx / 2;
        Ok(Self {
            nx,
            ny,
            density: 500.0,
            specific_heat: 200.0,
            k0: 303.15,
            k1: 0.3,
            dt,
            t_end,
            dirichlet_temp: 25.0,
            initial_temp: 25.0,
            schedule,
            load_nodes,
            probe_a,
            probe_b,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn schedule(&self) -> &BurstSchedule {
        &self.schedule
    }

    /// Replaces the burst schedule (for evaluation runs with a different
    /// seed than the snapshot runs).
    pub fn with_schedule(mut self, schedule: BurstSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_initial_temperature(mut self, temp: f64) -> Self {
        self.initial_temp = temp;
        self
    }

    pub fn probes(&self) -> (usize, usize) {
        (self.probe_a, self.probe_b)
    }

    pub fn load_nodes(&self) -> &[usize] {
        &self.load_nodes
    }

    pub fn conductivity(&self, temperature: f64) -> f64 {
        self.k0 + self.k1 * temperature
    }

    fn unknowns(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    fn spacing(&self) -> (f64, f64) {
        (1.0 / (self.nx as f64 - 1.0), 1.0 / (self.ny as f64 - 1.0))
    }

    /// Diagonal lumped capacitance entry `rho * c * cell volume`.
    pub fn capacitance(&self) -> f64 {
        let (hx, hy) = self.spacing();
        self.density * self.specific_heat * hx * hy
    }

    /// The per-node load vector `Q(t)`.
    pub fn excitation(&self, t: f64) -> DVector<f64> {
        let amp = self.schedule.amplitude(t);
        let mut q = DVector::zeros(self.unknowns());
        for &node in &self.load_nodes {
            q[node] = amp;
        }
        q
    }

    /// Temperature at a grid location, reading the Dirichlet value on the
    /// bottom row and `None` outside the grid (insulated faces).
    fn temp_at(&self, temps: &DVector<f64>, i: isize, j: isize) -> Option<f64> {
        if i < 0 || i >= self.nx as isize || j < 0 || j >= self.ny as isize {
            return None;
        }
        if j == 0 {
            return Some(self.dirichlet_temp);
        }
        Some(temps[(j as usize - 1) * self.nx + i as usize])
    }

    /// Heat-flux divergence `K(T) T` in flux form: for each unknown, the sum
    /// over grid edges of `conductance * (T_i - T_nb)`, with arithmetic-mean
    /// edge conductivities.
    fn conduction(&self, temps: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        let (hx, hy) = self.spacing();
        let gx = hy / hx;
        let gy = hx / hy;
        let mut out = DVector::zeros(self.unknowns());
        for j in 1..self.ny as isize {
            for i in 0..self.nx as isize {
                let row = (j as usize - 1) * self.nx + i as usize;
                let tc = temps[row];
                let kc = self.conductivity(tc);
                if !(kc > 0.0) {
                    return Err(ProblemError::NegativeConductivity {
                        value: kc,
                        temperature: tc,
                    });
                }
                let mut acc = 0.0;
                for (di, dj, g) in [(1isize, 0isize, gx), (-1, 0, gx), (0, 1, gy), (0, -1, gy)] {
                    if let Some(tn) = self.temp_at(temps, i + di, j + dj) {
                        let edge_k = 0.5 * (kc + self.conductivity(tn));
                        acc += g * edge_k * (tc - tn);
                    }
                }
                out[row] = acc;
            }
        }
        Ok(out)
    }

    /// Backward-Euler residual `C (T - T_prev) - dt (Q(t) - K(T) T)`.
    pub fn step_residual(
        &self,
        temps: &DVector<f64>,
        temps_prev: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>, ProblemError> {
        let n = self.unknowns();
        if temps.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: temps.len(),
            });
        }
        if temps_prev.len() != n {
            return Err(ProblemError::DimensionMismatch {
                expected: n,
                got: temps_prev.len(),
            });
        }
        if let Some(index) = temps.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { index });
        }
        let c = self.capacitance();
        let conduction = self.conduction(temps)?;
        let q = self.excitation(t);
        Ok((temps - temps_prev) * c - (q - conduction) * self.dt)
    }

    /// Jacobian of [`Self::step_residual`], including the conductivity
    /// derivative terms.
    pub fn step_jacobian(&self, temps: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        let n = self.unknowns();
        let (hx, hy) = self.spacing();
        let gx = hy / hx;
        let gy = hx / hy;
        let c = self.capacitance();
        let mut jac = DMatrix::zeros(n, n);
        for j in 1..self.ny as isize {
            for i in 0..self.nx as isize {
                let row = (j as usize - 1) * self.nx + i as usize;
                let tc = temps[row];
                let kc = self.conductivity(tc);
                let mut diag = c;
                for (di, dj, g) in [(1isize, 0isize, gx), (-1, 0, gx), (0, 1, gy), (0, -1, gy)] {
                    let (ni, nj) = (i + di, j + dj);
                    if let Some(tn) = self.temp_at(temps, ni, nj) {
                        let edge_k = 0.5 * (kc + self.conductivity(tn));
                        // d/dT_c of g * edge_k(T) * (T_c - T_n)
                        diag += self.dt * g * (edge_k + 0.5 * self.k1 * (tc - tn));
                        if nj > 0 {
                            let col = (nj as usize - 1) * self.nx + ni as usize;
                            jac[(row, col)] = self.dt * g * (-edge_k + 0.5 * self.k1 * (tc - tn));
                        }
                    }
                }
                jac[(row, row)] = diag;
            }
        }
        jac
    }
}

impl TransientProblem for HeatGridProblem {
    type Step<'a> = HeatStepModel<'a>;

    fn dim(&self) -> usize {
        self.unknowns()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::from_element(self.unknowns(), self.initial_temp)
    }

    fn step_model(&self, prev: DVector<f64>, t_new: f64) -> HeatStepModel<'_> {
        HeatStepModel {
            problem: self,
            prev,
            t: t_new,
        }
    }
}

/// One implicit heat-conduction step as a [`FullModel`].
pub struct HeatStepModel<'a> {
    problem: &'a HeatGridProblem,
    prev: DVector<f64>,
    t: f64,
}

impl FullModel for HeatStepModel<'_> {
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
