//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative threshold below which a QR diagonal entry counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis (as columns) of the orthogonal complement of the span of
/// the columns of `cols` (`d × k`). Errors when the columns are not linearly
/// independent.
pub fn complement_basis(cols: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, k) = cols.shape();
    if k > d {
        return Err(Error::RankDeficient { rank: d, rows: k });
    }
    if k == 0 {
        return Ok(DMatrix::identity(d, d));
    }
    // Householder QR of [cols | I] gives a full orthogonal Q whose first k
    // columns span the input.
    let mut aug = DMatrix::zeros(d, k + d);
    aug.view_mut((0, 0), (d, k)).copy_from(cols);
    aug.view_mut((0, k), (d, d)).fill_with_identity();
    let qr = aug.qr();
    let rank = leading_rank(&qr.r(), k, cols);
    if rank < k {
        return Err(Error::RankDeficient { rank, rows: k });
    }
    let q = qr.q();
    Ok(q.columns(k, d - k).into_owned())
}

/// Orthonormal basis of the row span of `rows` (`k × d`).
pub fn row_space_basis(rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, d) = rows.shape();
    if k == 0 {
        return Ok(DMatrix::zeros(d, 0));
    }
    if k > d {
        return Err(Error::RankDeficient { rank: d, rows: k });
    }
    let qr = rows.transpose().qr();
    let rank = leading_rank(&qr.r(), k, rows);
    if rank < k {
        return Err(Error::RankDeficient { rank, rows: k });
    }
    Ok(qr.q())
}

/// Number of the first `k` diagonal entries of `r` that are numerically
/// nonzero relative to the magnitude of `m`.
fn leading_rank(r: &DMatrix<f64>, k: usize, m: &DMatrix<f64>) -> usize {
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let tol = RANK_TOL * scale * libm::sqrt(m.len() as f64);
    (0..k).filter(|&j| r[(j, j)].abs() > tol).count()
}

/// Largest absolute entry of `a − b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
