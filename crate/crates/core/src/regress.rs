//! Sparse regression: OLS, ridge, Lasso, STRidge, SR3 with an L0 penalty,
//! and forward-backward greedy selection (FoBa).
//!
//! Every sweep first reduces `Theta xi ~ y` with a thin QR, `Theta = Q R`, so
//! that iterative work happens on the `p x p` factor:
//! `||Theta xi - y||^2 = ||R xi - Q^T y||^2 + ||(I - Q Q^T) y||^2`.
//! Reported models are always re-evaluated on the full system.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::linalg::{lstsq, LstsqSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Foba,
    Stridge,
    Lasso,
    Sr3,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Foba, Algorithm::Stridge, Algorithm::Lasso, Algorithm::Sr3];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Foba => "foba",
            Algorithm::Stridge => "stridge",
            Algorithm::Lasso => "lasso",
            Algorithm::Sr3 => "sr3",
        }
    }
}

/// Settings that produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Ols,
    Foba { epsilon: f64 },
    Stridge { lambda: f64, tol: f64 },
    Lasso { lambda: f64 },
    Sr3 { lambda: f64, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    /// Sorted column indices with nonzero coefficients.
    pub support: Vec<usize>,
    /// Length `p`, exactly zero off the support.
    pub coefficients: DVector<f64>,
    pub hyperparameters: Hyperparameters,
    /// `||Theta xi - y||_2` on the system the model was fit on.
    pub residual_norm: f64,
    /// Coefficients are an OLS refit on the support.
    pub refit_ols: bool,
    /// False when an iterative solver hit its iteration cap.
    pub converged: bool,
}

impl SparseModel {
    pub fn term_count(&self) -> usize {
        self.support.len()
    }

    pub fn empty(p: usize, target: &DVector<f64>, hyperparameters: Hyperparameters) -> Self {
        SparseModel {
            support: Vec::new(),
            coefficients: DVector::zeros(p),
            hyperparameters,
            residual_norm: target.norm(),
            refit_ols: true,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub algorithm: Algorithm,
    /// One model per distinct (support, refit) pair, in order of first appearance.
    pub models: Vec<SparseModel>,
    pub grid: Vec<Hyperparameters>,
}

/// Least squares through Householder QR (SVD minimum norm when rank deficient).
pub fn ols(theta: &DMatrix<f64>, target: &DVector<f64>) -> Result<LstsqSolution> {
    lstsq(theta, target)
}

/// Minimiser of `1/2 ||Theta xi - y||^2 + lambda ||xi||^2`, solved as the
/// augmented least-squares problem `[Theta; sqrt(2 lambda) I] xi ~ [y; 0]`.
pub fn ridge(theta: &DMatrix<f64>, target: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "ridge penalty must be non-negative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(lstsq(theta, target)?.x);
    }
    let (n, p) = theta.shape();
    let mut a = DMatrix::zeros(n + p, p);
    a.rows_mut(0, n).copy_from(theta);
    a.rows_mut(n, p).fill_diagonal((2.0 * lambda).sqrt());
    let mut b = DVector::zeros(n + p);
    b.rows_mut(0, n).copy_from(target);
    Ok(lstsq(&a, &b)?.x)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub const LASSO_MAX_SWEEPS: usize = 10_000;
pub const LASSO_TOL: f64 = 1e-12;
pub const SR3_MAX_ITER: usize = 10_000;
pub const SR3_TOL: f64 = 1e-12;
pub const STRIDGE_MAX_ITER: usize = 100;

/// Regression problem together with its QR reduction.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub theta: DMatrix<f64>,
    pub target: DVector<f64>,
    r: DMatrix<f64>,
    z: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(theta: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        let (n, p) = theta.shape();
        if target.len() != n {
            return Err(Error::invalid(format!(
                "target has {} rows, matrix has {n}",
                target.len()
            )));
        }
        if n < p || p == 0 {
            return Err(Error::invalid(format!(
                "regression needs at least as many samples as terms (n = {n}, p = {p})"
            )));
        }
        if theta.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "regression system".into(),
            });
        }
        let qr = theta.clone().qr();
        let r = qr.r();
        let mut qty = target.clone();
        qr.q_tr_mul(&mut qty);
        let z = qty.rows(0, p).into_owned();
        Ok(RegressionProblem { theta, target, r, z })
    }

    pub fn n_terms(&self) -> usize {
        self.theta.ncols()
    }

    fn full(&self, support: &[usize], coefs: &[f64]) -> DVector<f64> {
        let mut xi = DVector::zeros(self.n_terms());
        for (&j, &c) in support.iter().zip(coefs) {
            xi[j] = c;
        }
        xi
    }

    pub fn residual_norm(&self, xi: &DVector<f64>) -> f64 {
        (&self.theta * xi - &self.target).norm()
    }

    /// OLS on the columns in `support`, evaluated on the full system.
    pub fn refit(&self, support: &[usize], hyperparameters: Hyperparameters, converged: bool) -> Result<SparseModel> {
        let mut support = support.to_vec();
        support.sort_unstable();
        support.dedup();
        if support.is_empty() {
            let mut m = SparseModel::empty(self.n_terms(), &self.target, hyperparameters);
            m.converged = converged;
            return Ok(m);
        }
        let sol = lstsq(&self.theta.select_columns(&support), &self.target)?;
        let xi = self.full(&support, sol.x.as_slice());
        // a rank-deficient minimum-norm solve can leave exact zeros inside the support
        let support: Vec<usize> = support.into_iter().filter(|&j| xi[j] != 0.0).collect();
        Ok(SparseModel {
            residual_norm: self.residual_norm(&xi),
            support,
            coefficients: xi,
            hyperparameters,
            refit_ols: true,
            converged,
        })
    }

    /// Model with the given coefficients as they are (no refit).
    fn raw_model(&self, xi: DVector<f64>, hyperparameters: Hyperparameters, converged: bool) -> SparseModel {
        let support: Vec<usize> = (0..xi.len()).filter(|&j| xi[j] != 0.0).collect();
        SparseModel {
            residual_norm: self.residual_norm(&xi),
            support,
            coefficients: xi,
            hyperparameters,
            refit_ols: false,
            converged,
        }
    }

    /// Ridge on a column subset of the reduced system.
    fn ridge_reduced(&self, cols: &[usize], lambda: f64) -> Result<DVector<f64>> {
        ridge(&self.r.select_columns(cols), &self.z, lambda)
    }
}

/// Keeps, per (support, refit) key, the model with the smallest residual.
/// The surviving model stays at the position its key first appeared.
fn deduplicate(models: Vec<SparseModel>) -> Vec<SparseModel> {
    let mut slot: BTreeMap<(Vec<usize>, bool), usize> = BTreeMap::new();
    let mut out: Vec<SparseModel> = Vec::new();
    for m in models {
        let key = (m.support.clone(), m.refit_ols);
        match slot.get(&key) {
            Some(&i) => {
                if m.residual_norm < out[i].residual_norm {
                    out[i] = m;
                }
            }
            None => {
                slot.insert(key, out.len());
                out.push(m);
            }
        }
    }
    out
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

/// Hyperparameter grids of the four sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrids {
    /// FoBa stopping thresholds, relative to `||y||^2`.
    pub foba_epsilon: Vec<f64>,
    pub lasso_lambda: Vec<f64>,
    pub stridge_lambda: Vec<f64>,
    pub stridge_tol: Vec<f64>,
    pub sr3_lambda: Vec<f64>,
    pub sr3_gamma: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        let mut eps = logspace(1e-24, 1e-2, 45);
        eps.reverse();
        SweepGrids {
            foba_epsilon: eps,
            lasso_lambda: logspace(1e-10, 1.0, 30),
            stridge_lambda: logspace(1e-10, 1.0, 30),
            stridge_tol: logspace(1e-12, 1.0, 30),
            sr3_lambda: logspace(1e-10, 1.0, 30),
            sr3_gamma: vec![1e-4, 1e-2, 1.0, 1e2],
        }
    }
}

pub fn run_sweep(
    problem: &RegressionProblem,
    algorithm: Algorithm,
    grids: &SweepGrids,
    mode: Parallelism,
) -> Result<SweepResult> {
    match algorithm {
        Algorithm::Foba => {
            let scale = problem.target.norm_squared();
            let eps: Vec<f64> = grids.foba_epsilon.iter().map(|e| e * scale).collect();
            foba_sweep(problem, &eps, 1)
        }
        Algorithm::Lasso => lasso_sweep(problem, &grids.lasso_lambda, mode),
        Algorithm::Stridge => stridge_sweep(problem, &grids.stridge_lambda, &grids.stridge_tol, mode),
        Algorithm::Sr3 => sr3_sweep(problem, &grids.sr3_lambda, &grids.sr3_gamma, mode),
    }
}

// ---------------------------------------------------------------- Lasso

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coefficients: DVector<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Cyclic coordinate descent for `1/2 ||Theta xi - y||^2 + lambda ||xi||_1`
/// with covariance updates on `G = Theta^T Theta`, `c = Theta^T y`.
pub fn lasso_gram(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64) -> LassoFit {
    let p = c.len();
    let mut xi = DVector::zeros(p);
    // g = G xi
    let mut g = DVector::zeros(p);
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        let mut max_coef = 0.0_f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let old = xi[j];
            let rho = c[j] - g[j] + gjj * old;
            let new = soft_threshold(rho, lambda) / gjj;
            if new != old {
                let d = new - old;
                g.axpy(d, &gram.column(j), 1.0);
                xi[j] = new;
                max_change = max_change.max(d.abs());
            }
            max_coef = max_coef.max(new.abs());
        }
        if max_change <= LASSO_TOL * max_coef.max(1.0) {
            return LassoFit {
                coefficients: xi,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    LassoFit {
        coefficients: xi,
        sweeps: LASSO_MAX_SWEEPS,
        converged: false,
    }
}

pub fn lasso(theta: &DMatrix<f64>, target: &DVector<f64>, lambda: f64) -> LassoFit {
    lasso_gram(&theta.tr_mul(theta), &theta.tr_mul(target), lambda)
}

/// One Lasso fit per `lambda`; each contributes the raw Lasso model and its
/// OLS refit on the same support.
pub fn lasso_sweep(problem: &RegressionProblem, lambdas: &[f64], mode: Parallelism) -> Result<SweepResult> {
    let norms: Vec<f64> = problem.theta.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|n| (n - 1.0).abs() > 1e-6) {
        warn!("lasso sweep on columns that are not unit-norm");
    }
    let gram = problem.r.tr_mul(&problem.r);
    let c = problem.r.tr_mul(&problem.z);
    let fits = exec::map(mode, lambdas, |&lambda| -> Result<Vec<SparseModel>> {
        let fit = lasso_gram(&gram, &c, lambda);
        if !fit.converged {
            warn!("lasso with lambda = {lambda:e} stopped after {} sweeps", fit.sweeps);
        }
        let hp = Hyperparameters::Lasso { lambda };
        let raw = problem.raw_model(fit.coefficients, hp, fit.converged);
        let refit = problem.refit(&raw.support, hp, fit.converged)?;
        Ok(vec![raw, refit])
    });
    let mut models = Vec::new();
    for f in fits {
        models.extend(f?);
    }
    Ok(SweepResult {
        algorithm: Algorithm::Lasso,
        models: deduplicate(models),
        grid: lambdas
            .iter()
            .map(|&lambda| Hyperparameters::Lasso { lambda })
            .collect(),
    })
}

// ---------------------------------------------------------------- STRidge

/// Sequential thresholded ridge regression followed by an OLS refit.
pub fn stridge(problem: &RegressionProblem, lambda: f64, tol: f64) -> Result<SparseModel> {
    let hp = Hyperparameters::Stridge { lambda, tol };
    let p = problem.n_terms();
    let mut support: Vec<usize> = (0..p).collect();
    let mut coefs = problem.ridge_reduced(&support, lambda)?;
    let mut converged = false;
    for _ in 0..STRIDGE_MAX_ITER {
        let keep: Vec<usize> = support
            .iter()
            .zip(coefs.iter())
            .filter(|(_, c)| c.abs() >= tol)
            .map(|(&j, _)| j)
            .collect();
        if keep.len() == support.len() {
            converged = true;
            break;
        }
        support = keep;
        if support.is_empty() {
            converged = true;
            break;
        }
        coefs = problem.ridge_reduced(&support, lambda)?;
    }
    problem.refit(&support, hp, converged)
}

pub fn stridge_sweep(
    problem: &RegressionProblem,
    lambdas: &[f64],
    tols: &[f64],
    mode: Parallelism,
) -> Result<SweepResult> {
    let grid: Vec<Hyperparameters> = lambdas
        .iter()
        .flat_map(|&lambda| tols.iter().map(move |&tol| Hyperparameters::Stridge { lambda, tol }))
        .collect();
    let fits = exec::map(mode, &grid, |hp| match *hp {
        Hyperparameters::Stridge { lambda, tol } => stridge(problem, lambda, tol),
        _ => unreachable!(),
    });
    let models = fits.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        algorithm: Algorithm::Stridge,
        models: deduplicate(models),
        grid,
    })
}

// ---------------------------------------------------------------- SR3

#[derive(Debug, Clone)]
pub struct Sr3Fit {
    pub xi: DVector<f64>,
    pub w: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sr3_reduced(r: &DMatrix<f64>, z: &DVector<f64>, lambda: f64, gamma: f64) -> Result<Sr3Fit> {
    if !(gamma > 0.0) || !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "sr3 needs gamma > 0 and lambda >= 0 (got {gamma}, {lambda})"
        )));
    }
    let p = r.ncols();
    // (R^T R + gamma I) xi = R^T z + gamma w, factored once
    let h = r.tr_mul(r) + DMatrix::identity(p, p) * gamma;
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Linalg("sr3 system is not positive definite".into()))?;
    let rtz = r.tr_mul(z);
    let threshold = (2.0 * lambda / gamma).sqrt();
    // start from least squares; from w = 0 a large gamma would pin xi at zero
    let mut xi = lstsq(r, z)?.x;
    let mut w = xi.map(|v| if v.abs() > threshold { v } else { 0.0 });
    for it in 1..=SR3_MAX_ITER {
        let xi_new = chol.solve(&(&rtz + &w * gamma));
        let w_new = xi_new.map(|v| if v.abs() > threshold { v } else { 0.0 });
        let change = (&xi_new - &xi).amax();
        let scale = xi_new.amax().max(1.0);
        let same_support = w_new.iter().zip(w.iter()).all(|(a, b)| (*a == 0.0) == (*b == 0.0));
        xi = xi_new;
        w = w_new;
        if same_support && change <= SR3_TOL * scale {
            return Ok(Sr3Fit {
                xi,
                w,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(Sr3Fit {
        xi,
        w,
        iterations: SR3_MAX_ITER,
        converged: false,
    })
}

/// Relaxed L0 regression on the full matrix.
pub fn sr3(theta: &DMatrix<f64>, target: &DVector<f64>, lambda: f64, gamma: f64) -> Result<Sr3Fit> {
    let p = RegressionProblem::new(theta.clone(), target.clone())?;
    sr3_reduced(&p.r, &p.z, lambda, gamma)
}

pub fn sr3_sweep(
    problem: &RegressionProblem,
    lambdas: &[f64],
    gammas: &[f64],
    mode: Parallelism,
) -> Result<SweepResult> {
    let grid: Vec<Hyperparameters> = gammas
        .iter()
        .flat_map(|&gamma| {
            lambdas
                .iter()
                .map(move |&lambda| Hyperparameters::Sr3 { lambda, gamma })
        })
        .collect();
    let fits = exec::map(mode, &grid, |hp| -> Result<SparseModel> {
        let Hyperparameters::Sr3 { lambda, gamma } = *hp else {
            unreachable!()
        };
        let fit = sr3_reduced(&problem.r, &problem.z, lambda, gamma)?;
        if !fit.converged {
            warn!("sr3 with lambda = {lambda:e}, gamma = {gamma:e} hit the iteration cap");
        }
        let support: Vec<usize> = (0..fit.w.len()).filter(|&j| fit.w[j] != 0.0).collect();
        problem.refit(&support, *hp, fit.converged)
    });
    let models = fits.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        algorithm: Algorithm::Sr3,
        models: deduplicate(models),
        grid,
    })
}

// ---------------------------------------------------------------- FoBa

/// Relative size below which a column is treated as lying in the span of
/// the current support.
const FOBA_DEPENDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FobaStep {
    Forward { added: usize, gain: f64 },
    Backward { removed: usize, loss: f64 },
}

/// Stopping check of one forward step: the support before the step and the
/// best residual decrease available from it.
#[derive(Debug, Clone, PartialEq)]
struct ForwardCheck {
    support: Vec<usize>,
    gain: f64,
}

#[derive(Debug, Clone)]
pub struct FobaTrace {
    pub steps: Vec<FobaStep>,
    pub support: Vec<usize>,
    checks: Vec<ForwardCheck>,
}

/// Orthonormal basis of the selected columns of `R` plus the residual of `z`.
struct GreedyState<'a> {
    r: &'a DMatrix<f64>,
    z: &'a DVector<f64>,
    support: Vec<usize>,
    basis: Vec<DVector<f64>>,
    residual: DVector<f64>,
}

impl<'a> GreedyState<'a> {
    fn new(r: &'a DMatrix<f64>, z: &'a DVector<f64>) -> Self {
        GreedyState {
            r,
            z,
            support: Vec::new(),
            basis: Vec::new(),
            residual: z.clone(),
        }
    }

    /// Classical Gram-Schmidt with one reorthogonalisation pass.
    fn orthogonalise(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &self.basis {
                let d = q.dot(&w);
                w.axpy(-d, q, 1.0);
            }
        }
        w
    }

    fn rebuild(&mut self, support: Vec<usize>) {
        self.basis.clear();
        self.residual = self.z.clone();
        self.support.clear();
        for j in support {
            self.push(j);
        }
    }

    fn push(&mut self, j: usize) {
        let w = self.orthogonalise(&self.r.column(j).into_owned());
        let q = &w / w.norm();
        let d = q.dot(&self.residual);
        self.residual.axpy(-d, &q, 1.0);
        self.basis.push(q);
        self.support.push(j);
    }

    /// Best column to add and the residual decrease it gives; lowest index on ties.
    fn best_forward(&self) -> Option<(usize, f64)> {
        let p = self.r.ncols();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            if self.support.contains(&j) {
                continue;
            }
            let col = self.r.column(j).into_owned();
            let cn = col.norm();
            if cn == 0.0 {
                continue;
            }
            let w = self.orthogonalise(&col);
            let wn = w.norm();
            if wn <= FOBA_DEPENDENCE_TOL * cn {
                continue;
            }
            let gain = (w.dot(&self.residual) / wn).powi(2);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best
    }

    /// Column whose removal increases the residual least, and that increase.
    fn best_backward(&self) -> Option<(usize, f64)> {
        if self.support.is_empty() {
            return None;
        }
        let a = self.r.select_columns(&self.support);
        let qr = a.qr();
        let t = qr.r();
        let mut qtz = self.z.clone();
        qr.q_tr_mul(&mut qtz);
        let k = self.support.len();
        let coef = t.solve_upper_triangular(&qtz.rows(0, k).into_owned())?;
        let tinv = crate::linalg::upper_triangular_inverse(&t)?;
        let mut best: Option<(usize, f64)> = None;
        // iterate in column-index order so ties go to the lowest index
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| self.support[i]);
        for i in order {
            let loss = coef[i] * coef[i] / tinv.row(i).norm_squared();
            if best.is_none_or(|(_, l)| loss < l) {
                best = Some((self.support[i], loss));
            }
        }
        best
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

/// Adaptive forward-backward greedy selection on the reduced system.
///
/// A forward step adds the column with the largest residual decrease and
/// stops when that decrease falls below `epsilon`. After every
/// `backward_every` forward steps, columns are removed while the residual
/// increase stays below half the decrease of the forward step that reached
/// the current support size.
fn foba_path(r: &DMatrix<f64>, z: &DVector<f64>, epsilon: f64, backward_every: usize) -> FobaTrace {
    let p = r.ncols();
    let mut st = GreedyState::new(r, z);
    // gains[k - 1] is the decrease of the forward step that produced size k
    let mut gains: Vec<f64> = Vec::new();
    let mut steps = Vec::new();
    let mut checks = Vec::new();
    let mut forward_count = 0usize;
    let max_steps = 10 * p + 10;
    while steps.len() < max_steps {
        let best = st.best_forward();
        let gain = best.map_or(0.0, |(_, g)| g);
        checks.push(ForwardCheck {
            support: sorted(&st.support),
            gain,
        });
        let Some((j, gain)) = best else { break };
        if gain < epsilon {
            break;
        }
        st.push(j);
        gains.push(gain);
        steps.push(FobaStep::Forward { added: j, gain });
        forward_count += 1;
        if backward_every == 0 || !forward_count.is_multiple_of(backward_every) {
            continue;
        }
        while st.support.len() > 1 {
            let Some((jr, loss)) = st.best_backward() else { break };
            let last_gain = *gains.last().expect("support is non-empty");
            if loss >= 0.5 * last_gain {
                break;
            }
            let remaining: Vec<usize> = st.support.iter().copied().filter(|&c| c != jr).collect();
            st.rebuild(remaining);
            gains.pop();
            steps.push(FobaStep::Backward { removed: jr, loss });
        }
    }
    if steps.len() >= max_steps {
        warn!("foba stopped after {max_steps} steps without meeting its stopping rule");
        checks.push(ForwardCheck {
            support: sorted(&st.support),
            gain: 0.0,
        });
    }
    FobaTrace {
        steps,
        support: sorted(&st.support),
        checks,
    }
}

/// Greedy path with its step log, for inspection.
pub fn foba_trace(problem: &RegressionProblem, epsilon: f64, backward_every: usize) -> FobaTrace {
    foba_path(&problem.r, &problem.z, epsilon, backward_every)
}

/// Single FoBa fit with OLS coefficients on the terminal support.
pub fn foba(problem: &RegressionProblem, epsilon: f64, backward_every: usize) -> Result<SparseModel> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "foba threshold must be positive, got {epsilon}"
        )));
    }
    let trace = foba_path(&problem.r, &problem.z, epsilon, backward_every);
    problem.refit(&trace.support, Hyperparameters::Foba { epsilon }, true)
}

/// FoBa over a grid of absolute thresholds.
///
/// The threshold only enters the forward stopping check, so a run with a
/// larger threshold is a prefix of the run with the smallest one. One path is
/// computed and every threshold reads off the support at its first failing check.
pub fn foba_sweep(problem: &RegressionProblem, epsilons: &[f64], backward_every: usize) -> Result<SweepResult> {
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("foba thresholds must be positive"));
    }
    let grid: Vec<Hyperparameters> = epsilons
        .iter()
        .map(|&epsilon| Hyperparameters::Foba { epsilon })
        .collect();
    let Some(eps_min) = epsilons.iter().copied().reduce(f64::min) else {
        return Ok(SweepResult {
            algorithm: Algorithm::Foba,
            models: Vec::new(),
            grid,
        });
    };
    let trace = foba_path(&problem.r, &problem.z, eps_min, backward_every);
    let mut models = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let support = trace
            .checks
            .iter()
            .find(|c| c.gain < epsilon)
            .map_or(&trace.support, |c| &c.support);
        models.push(problem.refit(support, Hyperparameters::Foba { epsilon }, true)?);
    }
    Ok(SweepResult {
        algorithm: Algorithm::Foba,
        models: deduplicate(models),
        grid,
    })
}
