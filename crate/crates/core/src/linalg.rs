//! Small helpers for symmetric positive-definite matrix work.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Jitter added to the diagonal on the single retry after a failed
/// factorization.
const SPD_JITTER: f64 = 1e-10;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Cholesky factorization with one jittered retry. The retry is logged, never
/// silent; a second failure is reported to the caller.
pub(crate) fn spd_cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    log::warn!("{context}: Cholesky failed, retrying once with {SPD_JITTER:e} diagonal jitter");
    let mut jittered = m.clone();
    for i in 0..jittered.nrows() {
        jittered[(i, i)] += SPD_JITTER;
    }
    Cholesky::new(jittered).ok_or_else(|| {
        Error::numeric(format!(
            "{context}: matrix is not positive definite (Cholesky failed even with jitter)"
        ))
    })
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let inv = spd_cholesky(m, context)?.inverse();
    Ok(symmetrize(&inv))
}

/// log det of a symmetric positive-definite matrix via its Cholesky factor.
pub(crate) fn spd_log_det(m: &DMatrix<f64>, context: &str) -> Result<f64> {
    let chol = spd_cholesky(m, context)?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::numeric(format!(
                "{context}: invalid Cholesky diagonal {d}"
            )));
        }
        acc += 2.0 * d.ln();
    }
    Ok(acc)
}

/// Quadratic form v' M^{-1} v computed through the factorization of M.
pub(crate) fn spd_inv_quadratic(
    m: &DMatrix<f64>,
    v: &DVector<f64>,
    context: &str,
) -> Result<f64> {
    let chol = spd_cholesky(m, context)?;
    let x = chol.solve(v);
    Ok(v.dot(&x))
}

/// Smallest eigenvalue of a symmetric matrix (used by invariant checks).
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Greedy bipartite assignment maximizing |score|, no reuse of rows or
/// columns. Returns (row, column) pairs covering min(nrows, ncols) rows.
pub(crate) fn greedy_abs_assignment(scores: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(scores.nrows() * scores.ncols());
    for i in 0..scores.nrows() {
        for j in 0..scores.ncols() {
            pairs.push((i, j, scores[(i, j)].abs()));
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_rows = vec![false; scores.nrows()];
    let mut used_cols = vec![false; scores.ncols()];
    let mut out = Vec::new();
    for (i, j, _) in pairs {
        if !used_rows[i] && !used_cols[j] {
            used_rows[i] = true;
            used_cols[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}
