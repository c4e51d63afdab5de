//! Model selection with the Bayesian information criterion on an independent
//! test simulation, and the oracle "optimal choice" used as a baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::CandidateLibrary;
use crate::oracle::{classify_terms, AnalyticMde};
use crate::regress::SparseModel;

/// Floor applied to the squared test residual before taking its logarithm.
pub const RESIDUAL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: SparseModel,
    pub bic: f64,
    pub n_eff: usize,
    pub test_residual_sq: f64,
    pub term_count: usize,
}

/// `-(n_eff / 2) log(r) - (k / 2) log(n_eff)` with `r` the squared residual.
pub fn bic_value(n_eff: usize, residual_sq: f64, k: usize) -> f64 {
    let n = n_eff as f64;
    -0.5 * n * residual_sq.max(RESIDUAL_FLOOR).ln() - 0.5 * k as f64 * n.ln()
}

/// Scores a model whose coefficients are in physical units on the test
/// library; the coefficients are used as they are, without refitting.
pub fn bic_score(model: &SparseModel, test: &CandidateLibrary, n_eff: usize) -> Result<ModelScore> {
    if model.coefficients.len() != test.n_terms() {
        return Err(Error::invalid(format!(
            "model has {} coefficients, test library {} terms",
            model.coefficients.len(),
            test.n_terms()
        )));
    }
    if n_eff == 0 {
        return Err(Error::invalid("n_eff must be positive"));
    }
    let mut r = -test.target.clone();
    for &j in &model.support {
        r.axpy(model.coefficients[j], &test.theta.column(j), 1.0);
    }
    let test_residual_sq = r.norm_squared();
    let k = model.support.len();
    Ok(ModelScore {
        model: model.clone(),
        bic: bic_value(n_eff, test_residual_sq, k),
        n_eff,
        test_residual_sq,
        term_count: k,
    })
}

/// Index of the BIC maximiser; ties go to fewer terms, then smaller residual,
/// then the earlier entry.
pub fn select_best(scores: &[ModelScore]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::invalid("no models to select from"));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        let b = &scores[best];
        let better = s.bic > b.bic
            || (s.bic == b.bic
                && (s.term_count < b.term_count
                    || (s.term_count == b.term_count && s.test_residual_sq < b.test_residual_sq)));
        if better {
            best = i;
        }
    }
    Ok(best)
}

/// Model with the most correct terms among those without incorrect terms.
/// `None` when every model contains an incorrect term or all are empty.
pub fn optimal_choice(
    models: &[SparseModel],
    terms: &[crate::library::TermDescriptor],
    truth: &AnalyticMde,
) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, m) in models.iter().enumerate() {
        let c = classify_terms(m, terms, truth);
        if !c.is_clean() || c.correct.is_empty() {
            continue;
        }
        if best.is_none_or(|(_, n)| c.correct.len() > n) {
            best = Some((i, c.correct.len()));
        }
    }
    best.map(|(i, _)| i)
}
