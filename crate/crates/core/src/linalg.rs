//! Dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_ii| / max |R_jj|` below which a QR solve is
/// considered rank deficient and handed to the SVD.
const QR_RANK_TOL: f64 = 1e-14;

/// Thin QR with an explicit `Q`.
pub fn thin_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    (qr.q(), qr.r())
}

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    /// True when the matrix was numerically rank deficient and the minimum
    /// norm solution was returned instead.
    pub rank_deficient: bool,
}

/// Least-squares solution of `a x ~ b` via Householder QR, falling back to
/// the SVD minimum-norm solution for rank-deficient `a`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LstsqSolution> {
    let (n, p) = a.shape();
    if p == 0 {
        return Ok(LstsqSolution {
            x: DVector::zeros(0),
            rank_deficient: false,
        });
    }
    if n >= p {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let full_rank = diag_max > 0.0 && (0..p).all(|i| r[(i, i)].abs() > QR_RANK_TOL * diag_max);
        if full_rank {
            let mut qtb = b.clone();
            qr.q_tr_mul(&mut qtb);
            let qtb = qtb.rows(0, p).into_owned();
            let x = r
                .solve_upper_triangular(&qtb)
                .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
            return Ok(LstsqSolution {
                x,
                rank_deficient: false,
            });
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (n.max(p) as f64) * f64::EPSILON;
    let x = svd.solve(b, eps).map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(LstsqSolution {
        x,
        rank_deficient: true,
    })
}

/// Least squares on a column subset.
pub fn lstsq_columns(a: &DMatrix<f64>, cols: &[usize], b: &DVector<f64>) -> Result<LstsqSolution> {
    lstsq(&a.select_columns(cols), b)
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() >= a.ncols() {
        // the R factor carries the singular values at a fraction of the cost
        let r = a.clone().qr().r();
        r.svd(false, false).singular_values
    } else {
        a.clone().svd(false, false).singular_values
    }
}

/// `sigma_max / sigma_min`, or infinity when the smallest singular value is zero.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::NAN;
    }
    let s = singular_values(a);
    let smax = s.max();
    let smin = s.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Inverse of an upper-triangular matrix; `None` on a zero pivot.
pub fn upper_triangular_inverse(r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = r.nrows();
    r.solve_upper_triangular(&DMatrix::identity(k, k))
        .filter(|m| m.iter().all(|v| v.is_finite()))
}
