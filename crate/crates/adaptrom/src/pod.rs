//! Snapshot collection and proper orthogonal decomposition: assembling the
//! snapshot matrix, computing the energy-ordered orthonormal basis, and
//! truncating it into a trial basis plus a remainder pool.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

/// Relative singular-value cutoff below which POD directions are dropped as
/// numerically rank deficient.
const RANK_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PodError {
    #[error("snapshot solve failed at parameter {parameter}: {message}")]
    SnapshotSolve { parameter: f64, message: String },
    #[error("snapshot matrix must have at least one column")]
    EmptySchedule,
    #[error("snapshot column {column} contains a non-finite entry")]
    NonFiniteSnapshot { column: usize },
    #[error("snapshot column {column} has length {got}, expected {expected}")]
    InconsistentLength {
        column: usize,
        expected: usize,
        got: usize,
    },
    #[error("all snapshots are zero; no basis exists")]
    AllZeroSnapshots,
    #[error("cannot truncate to {requested} vectors, basis holds {available}")]
    TruncationTooLarge { requested: usize, available: usize },
    #[error("remainder pool exhausted: requested {requested}, {available} left")]
    PoolExhausted { requested: usize, available: usize },
}

/// An `N x M` collection of solved states, one column per parameter value.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    parameters: Vec<f64>,
}

impl SnapshotMatrix {
    /// Wraps an existing matrix, validating finiteness and shape.
    pub fn new(data: DMatrix<f64>, parameters: Vec<f64>) -> Result<Self, PodError> {
        if data.ncols() == 0 {
            return Err(PodError::EmptySchedule);
        }
        if parameters.len() != data.ncols() {
            return Err(PodError::InconsistentLength {
                column: parameters.len(),
                expected: data.ncols(),
                got: parameters.len(),
            });
        }
        for (c, col) in data.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(PodError::NonFiniteSnapshot { column: c });
            }
        }
        Ok(Self { data, parameters })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Solves the problem at every scheduled parameter and stacks the converged
/// states as snapshot columns, in schedule order.
pub fn collect_snapshots<F, E>(schedule: &[f64], mut solve: F) -> Result<SnapshotMatrix, PodError>
where
    F: FnMut(f64) -> Result<DVector<f64>, E>,
    E: std::fmt::Display,
{
    if schedule.is_empty() {
        return Err(PodError::EmptySchedule);
    }
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(schedule.len());
    for &p in schedule {
        let state = solve(p).map_err(|e| PodError::SnapshotSolve {
            parameter: p,
            message: e.to_string(),
        })?;
        if let Some(first) = columns.first() {
            if state.len() != first.len() {
                return Err(PodError::InconsistentLength {
                    column: columns.len(),
                    expected: first.len(),
                    got: state.len(),
                });
            }
        }
        columns.push(state);
    }
    let n = columns[0].len();
    let mut data = DMatrix::zeros(n, columns.len());
    for (c, col) in columns.iter().enumerate() {
        data.set_column(c, col);
    }
    SnapshotMatrix::new(data, schedule.to_vec())
}

/// An orthonormal POD basis with nonincreasing singular values.
#[derive(Debug, Clone)]
pub struct PodBasis {
    vectors: DMatrix<f64>,
    singular_values: DVector<f64>,
}

impl PodBasis {
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    /// Number of retained vectors `p`.
    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }

    /// Splits the basis into the `n` dominant vectors (the trial basis) and
    /// the remaining columns, retained as the append pool.
    pub fn truncate(&self, n: usize) -> Result<(DMatrix<f64>, RemainderPool), PodError> {
        if n > self.len() {
            return Err(PodError::TruncationTooLarge {
                requested: n,
                available: self.len(),
            });
        }
        let trial = self.vectors.columns(0, n).into_owned();
        let rest = self.vectors.columns(n, self.len() - n).into_owned();
        Ok((
            trial,
            RemainderPool {
                columns: rest,
                cursor: 0,
            },
        ))
    }
}

/// The POD vectors left over after truncation, drained front to back by the
/// pod-append enrichment strategy.
#[derive(Debug, Clone)]
pub struct RemainderPool {
    columns: DMatrix<f64>,
    cursor: usize,
}

impl RemainderPool {
    pub fn remaining(&self) -> usize {
        self.columns.ncols() - self.cursor
    }

    /// Removes and returns the next `count` columns, or `None` when fewer
    /// remain.
    pub fn take(&mut self, count: usize) -> Option<DMatrix<f64>> {
        if count > self.remaining() {
            return None;
        }
        let out = self.columns.columns(self.cursor, count).into_owned();
        self.cursor += count;
        Some(out)
    }
}

/// Computes the POD basis of a snapshot matrix: the left singular vectors
/// ordered by singular value, with numerically rank-deficient directions
/// dropped and each column's sign fixed so its largest-magnitude entry is
/// positive.
pub fn pod_compute(snapshots: &SnapshotMatrix, mean_subtract: bool) -> Result<PodBasis, PodError> {
    let mut data = snapshots.data.clone();
    if mean_subtract {
        let m = data.ncols() as f64;
        let mean = data
            .column_iter()
            .fold(DVector::zeros(data.nrows()), |acc, c| acc + c)
            / m;
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }
    }

    let svd = data.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma = svd.singular_values;

    let smax = sigma.iter().fold(0.0f64, |m, &v| m.max(v));
    if smax == 0.0 {
        return Err(PodError::AllZeroSnapshots);
    }
    let keep: Vec<usize> = (0..sigma.len())
        .filter(|&i| sigma[i] > RANK_RTOL * smax)
        .collect();

    let mut vectors = DMatrix::zeros(u.nrows(), keep.len());
    let mut values = DVector::zeros(keep.len());
    for (out_col, &i) in keep.iter().enumerate() {
        let mut col = u.column(i).into_owned();
        // sign convention: first largest-magnitude entry positive
        let mut lead = 0usize;
        for (k, v) in col.iter().enumerate() {
            if v.abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(out_col, &col);
        values[out_col] = sigma[i];
    }

    // singular values from nalgebra arrive sorted; keep the invariant explicit
    for w in values.as_slice().windows(2) {
        debug_assert!(w[0] >= w[1]);
    }
    debug_assert!(linalg::orthonormality_defect(&vectors) <= 1e-10);

    Ok(PodBasis {
        vectors,
        singular_values: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_snapshots(rng: &mut StdRng, n: usize, m: usize) -> SnapshotMatrix {
        let data = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        SnapshotMatrix::new(data, (0..m).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn repeated_column_collapses_to_one_vector() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut data = DMatrix::zeros(3, 2);
        data.set_column(0, &e1);
        data.set_column(1, &e1);
        let snaps = SnapshotMatrix::new(data, vec![0.0, 1.0]).unwrap();
        let basis = pod_compute(&snaps, false).unwrap();
        assert_eq!(basis.len(), 1);
        assert!((basis.singular_values()[0] - 2.0f64.sqrt()).abs() < 1e-12);
        assert!((basis.vectors().column(0) - e1).norm() < 1e-12);
    }

    #[test]
    fn all_zero_snapshots_is_an_error() {
        let snaps = SnapshotMatrix::new(DMatrix::zeros(4, 3), vec![0.0; 3]).unwrap();
        assert!(matches!(
            pod_compute(&snaps, false),
            Err(PodError::AllZeroSnapshots)
        ));
    }

    #[test]
    fn single_column_schedule() {
        let snaps = collect_snapshots(&[2.5], |p| {
            Ok::<_, std::convert::Infallible>(DVector::from_vec(vec![p, 2.0 * p]))
        })
        .unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps.dim(), 2);
        assert_eq!(snaps.parameters(), &[2.5]);
    }

    #[test]
    fn thousand_snapshot_schedule_collects_in_order() {
        let schedule: Vec<f64> = (1..=1000).map(|k| 2.0 * k as f64 / 1000.0).collect();
        let snaps = collect_snapshots(&schedule, |p| {
            Ok::<_, std::convert::Infallible>(DVector::from_vec(vec![p, p * p]))
        })
        .unwrap();
        assert_eq!(snaps.len(), 1000);
        assert_eq!(snaps.parameters()[0], 0.002);
        assert_eq!(snaps.parameters()[999], 2.0);
        assert_eq!(snaps.data()[(0, 499)], schedule[499]);
    }

    #[test]
    fn failed_solve_reports_the_parameter() {
        let err = collect_snapshots(&[1.0, 2.0], |p| {
            if p > 1.5 {
                Err("did not converge")
            } else {
                Ok(DVector::from_vec(vec![p]))
            }
        })
        .unwrap_err();
        match err {
            PodError::SnapshotSolve { parameter, .. } => assert_eq!(parameter, 2.0),
            other => panic!("unexpected error: {other}"),
        }
    }

    /// Eckart–Young against an eigen-decomposition of `X^T X`: the rank-j
    /// projection error must equal the tail singular energy.
    #[test]
    fn eckart_young_on_random_matrices() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.random_range(4..=50);
            let m = rng.random_range(1..=30);
            let snaps = random_snapshots(&mut rng, n, m);
            let basis = pod_compute(&snaps, false).unwrap();

            // independent oracle: eigenvalues of the Gram matrix
            let gram = snaps.data().transpose() * snaps.data();
            let mut eigs: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
            eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());

            let x = snaps.data();
            let total: f64 = x.iter().map(|v| v * v).sum();
            for j in 0..=basis.len() {
                let v = basis.vectors().columns(0, j);
                let proj = v * (v.transpose() * x);
                let err = (x - proj).iter().map(|v| v * v).sum::<f64>();
                let tail: f64 = eigs.iter().skip(j).map(|e| e.max(0.0)).sum();
                assert!(
                    (err - tail).abs() <= 1e-10 * total.max(1.0),
                    "rank-{j} projection error {err} vs tail energy {tail}"
                );
            }
        }
    }

    #[test]
    fn truncation_splits_and_preserves_orthonormality() {
        let mut rng = StdRng::seed_from_u64(23);
        let snaps = random_snapshots(&mut rng, 12, 8);
        let basis = pod_compute(&snaps, false).unwrap();
        let p = basis.len();
        let (trial, mut pool) = basis.truncate(3).unwrap();
        assert_eq!(trial.ncols(), 3);
        assert_eq!(pool.remaining(), p - 3);
        assert!(crate::linalg::orthonormality_defect(&trial) <= 1e-10);

        // sequential takes return disjoint energy-ordered columns
        let first = pool.take(2).unwrap();
        assert!((first.column(0) - basis.vectors().column(3)).norm() < 1e-15);
        assert!((first.column(1) - basis.vectors().column(4)).norm() < 1e-15);

        // full retention leaves an empty pool
        let (_, pool_all) = basis.truncate(p).unwrap();
        assert_eq!(pool_all.remaining(), 0);

        assert!(matches!(
            basis.truncate(p + 1),
            Err(PodError::TruncationTooLarge { .. })
        ));
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(31);
        let snaps = random_snapshots(&mut rng, 10, 6);
        let a = pod_compute(&snaps, false).unwrap();
        let b = pod_compute(&snaps, false).unwrap();
        assert_eq!(a.vectors(), b.vectors());
        for col in a.vectors().column_iter() {
            let mut lead = 0;
            for (k, v) in col.iter().enumerate() {
                if v.abs() > col[lead].abs() {
                    lead = k;
                }
            }
            assert!(col[lead] > 0.0);
        }
    }

    #[test]
    fn mean_subtraction_changes_leading_direction() {
        // snapshots with a large common offset: without centering the first
        // mode is the offset, with centering it is the variation
        let offset = DVector::from_element(6, 10.0);
        let mut data = DMatrix::zeros(6, 4);
        for c in 0..4 {
            let mut col = offset.clone();
            col[c] += 0.1;
            data.set_column(c, &col);
        }
        let snaps = SnapshotMatrix::new(data, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let raw = pod_compute(&snaps, false).unwrap();
        let centered = pod_compute(&snaps, true).unwrap();
        // raw leading vector is nearly the normalized offset
        let lead = raw.vectors().column(0).into_owned();
        assert!((lead - offset.normalize()).norm() < 0.05);
        // centered basis has strictly fewer or equally many vectors and its
        // leading singular value is far smaller
        assert!(centered.singular_values()[0] < 0.5);
    }
}
