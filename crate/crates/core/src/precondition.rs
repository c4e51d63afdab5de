//! Multicollinearity diagnostics and the two matrix preconditioners applied
//! before sparse regression: diagonal column scaling and the puffer
//! transformation `F = U D^-1 U^T`.
//!
//! The variance inflation factor is the standard `VIF_i = 1 / (1 - R_i^2)`,
//! where `R_i^2` comes from regressing column `i` on all other columns. Large
//! values mean column `i` is nearly a linear combination of the others.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{describe_term, CandidateLibrary};
use crate::linalg::upper_triangular_inverse;

pub use crate::linalg::condition_number;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VifOptions {
    /// Upper cap applied when `R_i^2 -> 1`.
    pub cap: f64,
    /// Include an intercept in every sub-regression (columns are centered).
    pub intercept: bool,
    pub method: VifMethod,
}

impl Default for VifOptions {
    fn default() -> Self {
        VifOptions {
            cap: 1e12,
            intercept: true,
            method: VifMethod::Qr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VifMethod {
    /// Row norms of `R^-1` from a QR of the normalised columns.
    #[default]
    Qr,
    /// Diagonal of the inverse correlation matrix via Cholesky; about five
    /// times cheaper, falls back to QR when the Cholesky factorisation fails.
    Gram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    /// Columns that received a VIF; constant columns (the intercept) are skipped.
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

impl VifReport {
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        let ms = self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64;
        ms.sqrt()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NAN, f64::max)
    }
}

fn is_constant(col: nalgebra::DVectorView<'_, f64>) -> bool {
    let first = col[0];
    col.iter().all(|&v| v == first)
}

/// Centered (optionally) and unit-normalised copies of the reportable columns.
fn normalised_columns(theta: &DMatrix<f64>, intercept: bool) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (n, p) = theta.shape();
    let columns: Vec<usize> = (0..p)
        .filter(|&j| !(intercept && is_constant(theta.column(j))))
        .collect();
    let mut x = DMatrix::zeros(n, columns.len());
    for (c, &j) in columns.iter().enumerate() {
        let col = theta.column(j);
        let mean = if intercept { col.mean() } else { 0.0 };
        let mut out = x.column_mut(c);
        out.iter_mut().zip(col.iter()).for_each(|(o, &v)| *o = v - mean);
        let norm = out.norm();
        if norm == 0.0 {
            return Err(Error::invalid(format!("column {j} is zero; VIF undefined")));
        }
        out /= norm;
    }
    Ok((columns, x))
}

fn clamp_vif(v: f64, cap: f64) -> f64 {
    if v.is_finite() {
        v.clamp(1.0, cap)
    } else {
        cap
    }
}

fn vif_qr(x: &DMatrix<f64>, cap: f64) -> Vec<f64> {
    let q = x.ncols();
    let r = x.clone().qr().r();
    match upper_triangular_inverse(&r) {
        Some(rinv) => (0..q).map(|i| clamp_vif(rinv.row(i).norm_squared(), cap)).collect(),
        None => {
            // exact zero pivots: columns after the first dependent one are undefined,
            // fall back to explicit sub-regressions
            (0..q).map(|i| clamp_vif(vif_by_subregression(x, i), cap)).collect()
        }
    }
}

fn vif_gram(x: &DMatrix<f64>, cap: f64) -> Option<Vec<f64>> {
    let q = x.ncols();
    let mut gram = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = x.column(i).dot(&x.column(j));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let chol = gram.cholesky()?;
    let l = chol.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(q, q))?;
    // (L L^T)^-1 = L^-T L^-1, diagonal = squared column norms of L^-1
    let vals: Vec<f64> = (0..q).map(|i| linv.column(i).norm_squared()).collect();
    if vals.iter().any(|v| !v.is_finite() || *v > cap) {
        // too ill-conditioned for the normal equations to be trusted
        return None;
    }
    Some(vals.into_iter().map(|v| clamp_vif(v, cap)).collect())
}

/// `1 / (1 - R^2)` from an explicit least-squares regression of column `i`
/// on the remaining (already centered) columns.
fn vif_by_subregression(x: &DMatrix<f64>, i: usize) -> f64 {
    let others: Vec<usize> = (0..x.ncols()).filter(|&j| j != i).collect();
    let y = x.column(i).into_owned();
    let ss_tot = y.norm_squared();
    if others.is_empty() {
        return 1.0;
    }
    let a = x.select_columns(&others);
    match crate::linalg::lstsq(&a, &y) {
        Ok(sol) => {
            let ss_res = (&a * sol.x - &y).norm_squared();
            ss_tot / ss_res
        }
        Err(_) => f64::INFINITY,
    }
}

/// Variance inflation factor of every non-constant column.
pub fn compute_vif(theta: &DMatrix<f64>, opts: &VifOptions) -> Result<VifReport> {
    if theta.ncols() < 2 {
        return Err(Error::invalid("VIF needs at least two columns"));
    }
    let (columns, x) = normalised_columns(theta, opts.intercept)?;
    if columns.is_empty() {
        return Err(Error::invalid("no non-constant columns"));
    }
    let values = match opts.method {
        VifMethod::Qr => vif_qr(&x, opts.cap),
        VifMethod::Gram => vif_gram(&x, opts.cap).unwrap_or_else(|| vif_qr(&x, opts.cap)),
    };
    Ok(VifReport { columns, values })
}

/// Root mean square of the VIFs, the objective of the initial-condition search.
pub fn rms_vif(theta: &DMatrix<f64>, opts: &VifOptions) -> Result<f64> {
    Ok(compute_vif(theta, opts)?.rms())
}

/// Applies `F = U D^-1 U^T` without forming the `n x n` matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PufferOperator {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

impl PufferOperator {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut c = self.u.tr_mul(v);
        c.component_div_assign(&self.singular_values);
        &self.u * c
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.u.tr_mul(m);
        for (mut row, &s) in c.row_iter_mut().zip(self.singular_values.iter()) {
            row /= s;
        }
        &self.u * c
    }

    /// `U D^-2 U^T`, the covariance of `F eps` for unit-variance white noise.
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        let mut ud = self.u.clone();
        for (mut col, &s) in ud.column_iter_mut().zip(self.singular_values.iter()) {
            col /= s * s;
        }
        ud * self.u.transpose()
    }
}

/// Scaled (and possibly puffered) regression problem.
///
/// Coefficients found on `theta` map back to the library's physical units
/// through `xi = xi_bar / scale`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreconditionedSystem {
    pub theta: DMatrix<f64>,
    pub target: DVector<f64>,
    pub scale: DVector<f64>,
    pub puffer: Option<PufferOperator>,
}

impl PreconditionedSystem {
    pub fn puffer_applied(&self) -> bool {
        self.puffer.is_some()
    }

    pub fn unscale(&self, xi_bar: &DVector<f64>) -> DVector<f64> {
        xi_bar.component_div(&self.scale)
    }

    pub fn rescale(&self, xi: &DVector<f64>) -> DVector<f64> {
        xi.component_mul(&self.scale)
    }
}

/// Divides every column by its 2-norm.
pub fn scale_columns(library: &CandidateLibrary) -> Result<PreconditionedSystem> {
    let p = library.n_terms();
    let mut scale = DVector::zeros(p);
    let mut theta = library.theta.clone();
    for j in 0..p {
        let s = theta.column(j).norm();
        if s == 0.0 || !s.is_finite() {
            return Err(Error::ZeroColumn {
                term: describe_term(&library.terms[j]),
            });
        }
        scale[j] = s;
        theta.column_mut(j).unscale_mut(s);
    }
    Ok(PreconditionedSystem {
        theta,
        target: library.target.clone(),
        scale,
        puffer: None,
    })
}

pub const DEFAULT_PUFFER_RANK_TOL: f64 = 1e-13;

/// Left-multiplies matrix and target by `F = U D^-1 U^T` from the thin SVD
/// of the scaled matrix, which makes the columns orthonormal.
pub fn puffer_transform(system: &PreconditionedSystem, rank_tol: f64) -> Result<PreconditionedSystem> {
    if system.puffer.is_some() {
        return Err(Error::invalid("puffer transformation already applied"));
    }
    let (n, p) = system.theta.shape();
    if n <= p {
        return Err(Error::invalid(format!(
            "puffer transformation needs more samples than terms (n = {n}, p = {p})"
        )));
    }
    let qr = system.theta.clone().qr();
    let q = qr.q();
    let svd = qr.r().svd(true, false);
    let sv = svd.singular_values.clone();
    let smax = sv.max();
    let threshold = rank_tol * smax;
    let small: Vec<f64> = sv.iter().copied().filter(|&s| s < threshold).collect();
    if !small.is_empty() {
        return Err(Error::RankDeficient {
            count: small.len(),
            threshold,
            smallest: small.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let u = q * svd.u.expect("left singular vectors were requested");
    let op = PufferOperator { u, singular_values: sv };
    Ok(PreconditionedSystem {
        theta: op.apply_matrix(&system.theta),
        target: op.apply(&system.target),
        scale: system.scale.clone(),
        puffer: Some(op),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::TermDescriptor;
    use crate::solvers::Grid1D;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn orthogonal_columns_have_unit_vif() {
        let mut x = DMatrix::zeros(4, 2);
        x.column_mut(0).copy_from_slice(&[1.0, -1.0, 1.0, -1.0]);
        x.column_mut(1).copy_from_slice(&[1.0, 1.0, -1.0, -1.0]);
        for method in [VifMethod::Qr, VifMethod::Gram] {
            let opts = VifOptions {
                method,
                ..Default::default()
            };
            let r = compute_vif(&x, &opts).unwrap();
            assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!((r.rms() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_column_hits_the_cap() {
        let mut x = random_matrix(50, 4, 1);
        let c = x.column(1).into_owned();
        x.column_mut(3).copy_from(&c);
        let r = compute_vif(&x, &VifOptions::default()).unwrap();
        assert_eq!(r.values[1], 1e12);
        assert_eq!(r.values[3], 1e12);
        let g = compute_vif(
            &x,
            &VifOptions {
                method: VifMethod::Gram,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(g.values[3], 1e12);
    }

    #[test]
    fn sine_and_its_second_derivative_are_collinear() {
        let n = 200;
        let k = 2.0 * std::f64::consts::PI * 3.0;
        let x = DMatrix::from_fn(n, 2, |i, j| {
            let s = (k * i as f64 / n as f64).sin();
            if j == 0 {
                s
            } else {
                -k * k * s
            }
        });
        let r = compute_vif(&x, &VifOptions::default()).unwrap();
        assert!(r.values.iter().all(|&v| v == 1e12));
    }

    #[test]
    fn intercept_column_is_not_reported() {
        let mut x = random_matrix(30, 3, 2);
        x.column_mut(0).fill(1.0);
        let r = compute_vif(&x, &VifOptions::default()).unwrap();
        assert_eq!(r.columns, vec![1, 2]);
    }

    #[test]
    fn rms_arithmetic() {
        let r = VifReport {
            columns: vec![0, 1],
            values: vec![3.0, 4.0],
        };
        assert!((r.rms() - (12.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn qr_and_gram_routes_agree_with_subregressions() {
        let mut x = random_matrix(120, 6, 3);
        // make two columns strongly related
        for i in 0..120 {
            x[(i, 5)] = x[(i, 0)] + 0.01 * x[(i, 5)];
        }
        let (_, xc) = normalised_columns(&x, true).unwrap();
        let qr = compute_vif(&x, &VifOptions::default()).unwrap();
        let gram = compute_vif(
            &x,
            &VifOptions {
                method: VifMethod::Gram,
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..6 {
            let direct = vif_by_subregression(&xc, i);
            assert!((qr.values[i] - direct).abs() <= 1e-8 * direct, "{i}");
            assert!((gram.values[i] - direct).abs() <= 1e-6 * direct, "{i}");
        }
    }

    fn library_from(theta: DMatrix<f64>, target: DVector<f64>) -> CandidateLibrary {
        let p = theta.ncols();
        CandidateLibrary {
            terms: (1..=p as u32).map(|k| TermDescriptor::product(k, &[])).collect(),
            sample_index: (0..theta.nrows()).map(|i| (0, i)).collect(),
            theta,
            target,
            grid: Grid1D::new(4, 1, 1.0).unwrap(),
        }
    }

    #[test]
    fn scaling_of_a_ones_column() {
        let lib = library_from(DMatrix::from_element(4, 1, 1.0), DVector::from_element(4, 2.0));
        let s = scale_columns(&lib).unwrap();
        assert_eq!(s.scale[0], 2.0);
        assert_eq!(s.target, lib.target);
    }

    #[test]
    fn zero_column_is_rejected_with_its_name() {
        let mut theta = random_matrix(10, 3, 4);
        theta.column_mut(1).fill(0.0);
        let lib = library_from(theta, DVector::zeros(10));
        match scale_columns(&lib) {
            Err(Error::ZeroColumn { term }) => assert_eq!(term, "u^2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn puffer_orthonormalises() {
        let theta = random_matrix(80, 5, 5);
        let lib = library_from(theta, DVector::from_fn(80, |i, _| (i as f64).sin()));
        let s = scale_columns(&lib).unwrap();
        let p = puffer_transform(&s, DEFAULT_PUFFER_RANK_TOL).unwrap();
        let g = p.theta.tr_mul(&p.theta);
        assert!((g - DMatrix::identity(5, 5)).amax() < 1e-12);
        assert!((condition_number(&p.theta) - 1.0).abs() < 1e-10);
        assert!(puffer_transform(&p, DEFAULT_PUFFER_RANK_TOL).is_err());
    }

    #[test]
    fn puffer_on_orthonormal_input_keeps_the_matrix() {
        let (q, _) = crate::linalg::thin_qr(&random_matrix(40, 4, 6));
        let lib = library_from(q.clone(), DVector::from_fn(40, |i, _| i as f64));
        let s = scale_columns(&lib).unwrap();
        let p = puffer_transform(&s, DEFAULT_PUFFER_RANK_TOL).unwrap();
        assert!((&p.theta - &q).amax() < 1e-12);
        // target is projected onto the column space
        let proj = &q * q.tr_mul(&lib.target);
        assert!((&p.target - proj).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_puffer_is_an_error() {
        let mut theta = random_matrix(30, 3, 7);
        let c = theta.column(0) * 2.0;
        theta.column_mut(2).copy_from(&c);
        let lib = library_from(theta, DVector::zeros(30));
        let s = scale_columns(&lib).unwrap();
        assert!(matches!(
            puffer_transform(&s, DEFAULT_PUFFER_RANK_TOL),
            Err(Error::RankDeficient { count: 1, .. })
        ));
    }
}
