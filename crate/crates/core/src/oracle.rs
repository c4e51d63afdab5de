//! Closed-form truncation-error coefficients of the three schemes and the
//! metrics that compare identified models against them.
//!
//! All coefficients follow the `u_t = RHS` convention, so `u_t = -a u_x + ...`
//! for advection. `h = dt / dx` throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{describe_term, TermDescriptor};
use crate::regress::SparseModel;
use crate::solvers::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    AdvectionFtbs,
    BurgersMacCormack,
    KdvZabuskyKruskal,
}

impl CaseId {
    pub fn for_scheme(scheme: &Scheme) -> Self {
        match scheme {
            Scheme::Ftbs { .. } => CaseId::AdvectionFtbs,
            Scheme::MacCormack => CaseId::BurgersMacCormack,
            Scheme::ZabuskyKruskal => CaseId::KdvZabuskyKruskal,
        }
    }

    /// Power of `dx` up to which the closed forms are known.
    pub fn truncation_order(self) -> u32 {
        match self {
            CaseId::AdvectionFtbs => 5,
            CaseId::BurgersMacCormack => 2,
            CaseId::KdvZabuskyKruskal => 4,
        }
    }
}

fn p(k: u32, spatial: &[u32]) -> TermDescriptor {
    TermDescriptor::product(k, spatial)
}

/// `(term, coefficient, power of dx)` for one case.
fn table(case: CaseId, dx: f64, h: f64, a: f64) -> Vec<(TermDescriptor, f64, i32)> {
    match case {
        CaseId::AdvectionFtbs => {
            let (a2, a3, a4, a5, a6) = (a.powi(2), a.powi(3), a.powi(4), a.powi(5), a.powi(6));
            let (h2, h3, h4, h5) = (h.powi(2), h.powi(3), h.powi(4), h.powi(5));
            vec![
                (p(0, &[1]), -a, 0),
                (p(0, &[2]), dx * (a - a2 * h) / 2.0, 1),
                (p(0, &[3]), -dx.powi(2) * (a - 3.0 * a2 * h + 2.0 * a3 * h2) / 6.0, 2),
                (
                    p(0, &[4]),
                    -dx.powi(3) * (-a + 7.0 * a2 * h - 12.0 * a3 * h2 + 6.0 * a4 * h3) / 24.0,
                    3,
                ),
                (
                    p(0, &[5]),
                    -dx.powi(4) * (a - 15.0 * a2 * h + 50.0 * a3 * h2 - 60.0 * a4 * h3 + 24.0 * a5 * h4) / 120.0,
                    4,
                ),
                (
                    p(0, &[6]),
                    -dx.powi(5)
                        * (-a + 31.0 * a2 * h - 180.0 * a3 * h2 + 390.0 * a4 * h3 - 360.0 * a5 * h4 + 120.0 * a6 * h5)
                        / 720.0,
                    5,
                ),
            ]
        }
        CaseId::BurgersMacCormack => {
            let d2 = dx * dx;
            let h2 = h * h;
            vec![
                (p(1, &[1]), -1.0, 0),
                (p(3, &[3]), d2 * h2 / 6.0, 2),
                (p(1, &[3]), -d2 / 6.0, 2),
                (p(2, &[1, 2]), d2 * h2, 2),
                (p(1, &[1, 2]), -d2 * h / 2.0, 2),
                (p(0, &[1, 2]), -d2 / 2.0, 2),
                (p(1, &[1, 1, 1]), d2 * h2 / 2.0, 2),
                (p(0, &[1, 1, 1]), -d2 * h / 4.0, 2),
            ]
        }
        CaseId::KdvZabuskyKruskal => {
            let d2 = dx * dx;
            let d4 = d2 * d2;
            vec![
                (p(1, &[1]), -6.0, 0),
                (p(0, &[3]), -1.0, 0),
                (TermDescriptor::time_derivative(3), -d2 * h * h / 6.0, 2),
                (p(0, &[5]), -d2 / 4.0, 2),
                (p(1, &[3]), -d2, 2),
                (p(0, &[1, 2]), -2.0 * d2, 2),
                (TermDescriptor::time_derivative(5), -d4 * h.powi(4) / 120.0, 4),
                (p(0, &[7]), -d4 / 40.0, 4),
                (p(0, &[2, 3]), -d4 / 3.0, 4),
                (p(0, &[1, 4]), -d4 / 6.0, 4),
                (p(1, &[5]), -d4 / 20.0, 4),
            ]
        }
    }
}

/// Modified differential equation of one scheme on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMde {
    pub case_id: CaseId,
    pub dx: f64,
    pub h: f64,
    pub speed: f64,
    pub terms: Vec<AnalyticTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTerm {
    pub term: TermDescriptor,
    pub coefficient: f64,
    /// Exponent of `dx` in the coefficient.
    pub dx_order: i32,
}

impl AnalyticMde {
    pub fn new(case_id: CaseId, dx: f64, h: f64, speed: Option<f64>) -> Result<Self> {
        if !(dx > 0.0) || !(h > 0.0) {
            return Err(Error::invalid(format!("dx ({dx}) and h ({h}) must be positive")));
        }
        let a = match (case_id, speed) {
            (CaseId::AdvectionFtbs, Some(a)) => a,
            (CaseId::AdvectionFtbs, None) => {
                return Err(Error::invalid("advection coefficients need the advection speed"))
            }
            (_, _) => 1.0,
        };
        let terms = table(case_id, dx, h, a)
            .into_iter()
            .map(|(term, coefficient, dx_order)| AnalyticTerm {
                term,
                coefficient,
                dx_order,
            })
            .collect();
        Ok(AnalyticMde {
            case_id,
            dx,
            h,
            speed: a,
            terms,
        })
    }

    /// Oracle for the scheme that produced a run with the given `dx` and `dt`.
    pub fn for_scheme(scheme: &Scheme, dx: f64, dt: f64) -> Result<Self> {
        let speed = match scheme {
            Scheme::Ftbs { speed } => Some(*speed),
            _ => None,
        };
        Self::new(CaseId::for_scheme(scheme), dx, dt / dx, speed)
    }

    pub fn coefficient(&self, term: &TermDescriptor) -> Option<f64> {
        self.terms.iter().find(|t| &t.term == term).map(|t| t.coefficient)
    }

    pub fn contains(&self, term: &TermDescriptor) -> bool {
        self.coefficient(term).is_some()
    }

    pub fn theoretical_order(&self, term: &TermDescriptor) -> Option<i32> {
        self.terms.iter().find(|t| &t.term == term).map(|t| t.dx_order)
    }
}

pub fn analytic_coefficients(
    case_id: CaseId,
    dx: f64,
    h: f64,
    speed: Option<f64>,
) -> Result<Vec<(TermDescriptor, f64)>> {
    Ok(AnalyticMde::new(case_id, dx, h, speed)?
        .terms
        .into_iter()
        .map(|t| (t.term, t.coefficient))
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermClassification {
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
}

impl TermClassification {
    pub fn is_clean(&self) -> bool {
        self.incorrect.is_empty()
    }
}

/// Splits the support of `model` into terms present in the analytic MDE and
/// terms that are not.
pub fn classify_terms(model: &SparseModel, terms: &[TermDescriptor], truth: &AnalyticMde) -> TermClassification {
    let mut out = TermClassification::default();
    for &j in &model.support {
        if truth.contains(&terms[j]) {
            out.correct.push(j);
        } else {
            out.incorrect.push(j);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermError {
    pub term: String,
    pub predicted: f64,
    pub analytic: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// False when the model contains an incorrect term; `mae`/`mre` are then
    /// `None` rather than a placeholder number.
    pub valid: bool,
    pub mae: Option<f64>,
    pub mre: Option<f64>,
    pub per_term: Vec<TermError>,
}

/// Mean absolute and mean relative coefficient error over the model's terms.
/// `model.coefficients` must be in physical (unscaled) units.
pub fn mae_mre(model: &SparseModel, terms: &[TermDescriptor], truth: &AnalyticMde) -> ErrorMetrics {
    let mut per_term = Vec::with_capacity(model.support.len());
    let (mut sa, mut sr) = (0.0, 0.0);
    let mut valid = true;
    for &j in &model.support {
        let predicted = model.coefficients[j];
        let analytic = truth.coefficient(&terms[j]);
        let (abs_error, rel_error) = match analytic {
            Some(c) => {
                let ae = (predicted - c).abs();
                let re = ae / c.abs();
                sa += ae;
                sr += re;
                (Some(ae), Some(re))
            }
            None => {
                valid = false;
                (None, None)
            }
        };
        per_term.push(TermError {
            term: describe_term(&terms[j]),
            predicted,
            analytic,
            abs_error,
            rel_error,
        });
    }
    let k = model.support.len() as f64;
    let (mae, mre) = if valid && k > 0.0 {
        (Some(sa / k), Some(sr / k))
    } else {
        (None, None)
    };
    ErrorMetrics {
        valid,
        mae,
        mre,
        per_term,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Mean of the usable pairwise orders; `None` if no pair was usable.
    pub order: Option<f64>,
    /// Order of each consecutive pair, `None` where the pair was excluded.
    pub pairwise: Vec<Option<f64>>,
}

/// `k = log(xi_1 / xi_2) / log(dx_1 / dx_2)` over consecutive pairs, averaged.
/// Pairs whose coefficients change sign or vanish are excluded.
pub fn empirical_order(coefs_by_dx: &[(f64, f64)]) -> Result<OrderEstimate> {
    if coefs_by_dx.len() < 2 {
        return Err(Error::invalid("empirical order needs at least two resolutions"));
    }
    let pairwise: Vec<Option<f64>> = coefs_by_dx
        .windows(2)
        .map(|w| {
            let ((d1, c1), (d2, c2)) = (w[0], w[1]);
            if c1 == 0.0 || c2 == 0.0 || c1.signum() != c2.signum() || d1 == d2 {
                None
            } else {
                Some((c1 / c2).ln() / (d1 / d2).ln())
            }
        })
        .collect();
    let used: Vec<f64> = pairwise.iter().flatten().copied().collect();
    let order = if used.is_empty() {
        None
    } else {
        Some(used.iter().sum::<f64>() / used.len() as f64)
    };
    Ok(OrderEstimate { order, pairwise })
}
