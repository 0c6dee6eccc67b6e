//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold below which an LU factorization is declared
/// singular.
pub(crate) const PIVOT_RTOL: f64 = 1e-14;

/// Relative eigenvalue cutoff for the pseudo-inverse fallback of a Gram
/// matrix factorization.
pub(crate) const GRAM_EIG_RTOL: f64 = 1e-12;

/// Solves the dense system `a x = b` by LU with partial pivoting.
///
/// Returns `None` when a pivot magnitude falls below
/// `PIVOT_RTOL * max|a_ij|`, i.e. the matrix is numerically rank deficient.
pub(crate) fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.amax();
    if scale == 0.0 {
        return None;
    }
    let lu = a.clone().lu();
    let dmin = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    if dmin < PIVOT_RTOL * scale {
        return None;
    }
    lu.solve(b)
}

/// Solves `g x = b` for a symmetric positive semi-definite `g` (a Gram
/// matrix). Tries Cholesky first; on rank deficiency falls back to the
/// eigenvalue pseudo-inverse, truncating eigenvalues below
/// `GRAM_EIG_RTOL * lambda_max`.
///
/// The boolean in the result is `true` when the fallback path was taken.
pub(crate) fn gram_solve(g: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
    if let Some(chol) = g.clone().cholesky() {
        return Some((chol.solve(b), false));
    }
    let eig = g.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if lmax == 0.0 {
        return None;
    }
    let cutoff = GRAM_EIG_RTOL * lmax;
    let mut y = eig.eigenvectors.transpose() * b;
    let mut kept = 0usize;
    for (yi, &li) in y.iter_mut().zip(eig.eigenvalues.iter()) {
        if li.abs() > cutoff {
            *yi /= li;
            kept += 1;
        } else {
            *yi = 0.0;
        }
    }
    if kept == 0 {
        return None;
    }
    Some((&eig.eigenvectors * y, true))
}

/// Orthonormalizes the columns of `[left right]` by modified Gram–Schmidt
/// with one reorthogonalization pass, dropping columns whose orthogonalized
/// norm falls below `drop_tol` times the largest input column norm.
///
/// Columns are processed left to right, so the span of `left` is preserved
/// whenever `left` itself has independent columns.
pub(crate) fn orthonormalize_with_drop(
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
    drop_tol: f64,
) -> DMatrix<f64> {
    let nrows = left.nrows();
    assert!(
        right.ncols() == 0 || right.nrows() == nrows,
        "row count mismatch"
    );
    let max_norm = left
        .column_iter()
        .chain(right.column_iter())
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let threshold = drop_tol * max_norm;

    let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(left.ncols() + right.ncols());
    for col in left.column_iter().chain(right.column_iter()) {
        let mut v = col.into_owned();
        for _ in 0..2 {
            for a in &accepted {
                let proj = a.dot(&v);
                v.axpy(-proj, a, 1.0);
            }
        }
        let norm = v.norm();
        if norm > threshold && norm > 0.0 {
            accepted.push(v / norm);
        }
    }

    let mut out = DMatrix::zeros(nrows, accepted.len());
    for (k, a) in accepted.iter().enumerate() {
        out.set_column(k, a);
    }
    out
}

/// Largest entry of `|m^T m - I|`; zero for perfectly orthonormal columns.
pub(crate) fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    let gram = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}
