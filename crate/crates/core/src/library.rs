//! Candidate-term libraries: the design matrix `Theta(u)` and target `u_t`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{Grid1D, SolutionField};
use crate::stencil::{apply_spatial_levels, apply_temporal, make_centered_stencil, retained_levels};

/// Symbolic identity of one library column.
///
/// A term is either the intercept, a product `u^k * prod_m d^m u / dx^m`
/// over a multiset of spatial derivative orders, or a bare time derivative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermDescriptor {
    pub u_power: u32,
    /// Spatial derivative orders of the factors, sorted ascending.
    pub spatial: Vec<u32>,
    pub time_order: u32,
    pub is_intercept: bool,
}

impl TermDescriptor {
    pub fn intercept() -> Self {
        TermDescriptor {
            u_power: 0,
            spatial: Vec::new(),
            time_order: 0,
            is_intercept: true,
        }
    }

    /// `u^k * prod u_{x^m}`; the multiset is put in canonical order.
    pub fn product(u_power: u32, spatial: &[u32]) -> Self {
        let mut spatial = spatial.to_vec();
        spatial.sort_unstable();
        assert!(spatial.iter().all(|&m| m > 0), "spatial orders must be positive");
        assert!(
            u_power > 0 || !spatial.is_empty(),
            "use TermDescriptor::intercept for the constant term"
        );
        TermDescriptor {
            u_power,
            spatial,
            time_order: 0,
            is_intercept: false,
        }
    }

    pub fn time_derivative(order: u32) -> Self {
        assert!(order > 0);
        TermDescriptor {
            u_power: 0,
            spatial: Vec::new(),
            time_order: order,
            is_intercept: false,
        }
    }

    /// Parses the output of [`describe_term`], e.g. `"u^2*u_x*u_xx"`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Self::intercept());
        }
        let mut power = 0u32;
        let mut spatial = Vec::new();
        let mut time = 0u32;
        for factor in s.split('*') {
            let factor = factor.trim();
            if factor == "u" {
                power += 1;
            } else if let Some(p) = factor.strip_prefix("u^") {
                power += p
                    .parse::<u32>()
                    .map_err(|_| Error::invalid(format!("bad power in term `{s}`")))?;
            } else if let Some(d) = factor.strip_prefix("u_") {
                if !d.is_empty() && d.chars().all(|c| c == 'x') {
                    spatial.push(d.len() as u32);
                } else if !d.is_empty() && d.chars().all(|c| c == 't') {
                    time += d.len() as u32;
                } else {
                    return Err(Error::invalid(format!("bad derivative in term `{s}`")));
                }
            } else {
                return Err(Error::invalid(format!("unrecognised factor `{factor}` in `{s}`")));
            }
        }
        if time > 0 {
            if power > 0 || !spatial.is_empty() {
                return Err(Error::invalid(format!(
                    "term `{s}` mixes time derivatives with other factors"
                )));
            }
            return Ok(Self::time_derivative(time));
        }
        if power == 0 && spatial.is_empty() {
            return Err(Error::invalid(format!("empty term `{s}`")));
        }
        Ok(Self::product(power, &spatial))
    }

    pub fn cumulative_order(&self) -> u32 {
        self.spatial.iter().sum()
    }
}

/// Human-readable, stable name of a term: `"1"`, `"u*u_xxx"`, `"u_ttt"`.
pub fn describe_term(term: &TermDescriptor) -> String {
    if term.is_intercept {
        return "1".to_string();
    }
    if term.time_order > 0 {
        return format!("u_{}", "t".repeat(term.time_order as usize));
    }
    let mut parts = Vec::new();
    match term.u_power {
        0 => {}
        1 => parts.push("u".to_string()),
        k => parts.push(format!("u^{k}")),
    }
    for &m in &term.spatial {
        parts.push(format!("u_{}", "x".repeat(m as usize)));
    }
    parts.join("*")
}

impl fmt::Display for TermDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&describe_term(self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub max_single_derivative_order: u32,
    /// Largest cumulative order of derivative products; 0 disables products.
    pub max_cumulative_product_order: u32,
    pub max_u_power: u32,
    #[serde(default)]
    pub include_time_derivatives: Vec<u32>,
    #[serde(default = "default_accuracy")]
    pub accuracy: usize,
    pub pad_t: usize,
}

fn default_accuracy() -> usize {
    8
}

impl LibrarySpec {
    /// `u` and its spatial derivatives up to order 6, times `u^k`, `k <= 6`.
    pub fn advection_small() -> Self {
        LibrarySpec {
            max_single_derivative_order: 6,
            max_cumulative_product_order: 0,
            max_u_power: 6,
            include_time_derivatives: Vec::new(),
            accuracy: 8,
            pad_t: 6,
        }
    }

    /// All derivative products of cumulative order up to 6, times `u^k`, `k <= 6`.
    pub fn advection_large() -> Self {
        LibrarySpec {
            max_cumulative_product_order: 6,
            ..Self::advection_small()
        }
    }

    pub fn burgers() -> Self {
        LibrarySpec {
            max_single_derivative_order: 3,
            max_cumulative_product_order: 3,
            max_u_power: 3,
            include_time_derivatives: Vec::new(),
            accuracy: 8,
            pad_t: 6,
        }
    }

    /// Single derivatives up to order 7, products up to cumulative order 3,
    /// `u^k` for `k <= 3`, plus bare `u_tt` and `u_ttt`.
    pub fn kdv() -> Self {
        LibrarySpec {
            max_single_derivative_order: 7,
            max_cumulative_product_order: 3,
            max_u_power: 3,
            include_time_derivatives: vec![2, 3],
            accuracy: 8,
            pad_t: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_single_derivative_order < 1 {
            return Err(Error::invalid("max_single_derivative_order must be at least 1"));
        }
        if self.accuracy == 0 || !self.accuracy.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "accuracy must be a positive even integer, got {}",
                self.accuracy
            )));
        }
        if self.include_time_derivatives.iter().any(|&d| d < 2) {
            return Err(Error::invalid(
                "time-derivative candidates must have order >= 2 (u_t is the target)",
            ));
        }
        Ok(())
    }

    /// Half-width of the widest temporal stencil the library needs (target included).
    pub fn temporal_half_width(&self) -> Result<usize> {
        let mut w = make_centered_stencil(1, self.accuracy)?.half_width();
        for &d in &self.include_time_derivatives {
            w = w.max(make_centered_stencil(d as usize, self.accuracy)?.half_width());
        }
        Ok(w)
    }
}

/// All partitions of `n` into positive parts, each sorted ascending.
fn partitions(n: u32) -> Vec<Vec<u32>> {
    fn rec(n: u32, max_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 0 {
            let mut p = prefix.clone();
            p.sort_unstable();
            out.push(p);
            return;
        }
        for part in (1..=max_part.min(n)).rev() {
            prefix.push(part);
            rec(n - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// Derivative multisets of a spec, ordered by cumulative order, then factor
/// count, then lexicographically.
pub fn derivative_multisets(spec: &LibrarySpec) -> Vec<Vec<u32>> {
    let mut set: BTreeSet<(u32, usize, Vec<u32>)> = BTreeSet::new();
    for m in 1..=spec.max_single_derivative_order {
        set.insert((m, 1, vec![m]));
    }
    for n in 1..=spec.max_cumulative_product_order {
        for p in partitions(n) {
            set.insert((n, p.len(), p));
        }
    }
    set.into_iter().map(|(_, _, p)| p).collect()
}

/// Deterministic, duplicate-free list of candidate terms.
pub fn enumerate_terms(spec: &LibrarySpec) -> Vec<TermDescriptor> {
    let mut terms = vec![TermDescriptor::intercept()];
    for k in 1..=spec.max_u_power {
        terms.push(TermDescriptor::product(k, &[]));
    }
    for ms in derivative_multisets(spec) {
        for k in 0..=spec.max_u_power {
            terms.push(TermDescriptor::product(k, &ms));
        }
    }
    let mut times = spec.include_time_derivatives.clone();
    times.sort_unstable();
    times.dedup();
    for d in times {
        terms.push(TermDescriptor::time_derivative(d));
    }
    let mut seen = BTreeSet::new();
    terms.retain(|t| seen.insert(t.clone()));
    terms
}

/// Assembled regression problem `u_t = Theta xi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateLibrary {
    pub terms: Vec<TermDescriptor>,
    /// `n_samples x p`, rows ordered time-major then space.
    pub theta: DMatrix<f64>,
    pub target: DVector<f64>,
    /// `(time level, space index)` of every row.
    pub sample_index: Vec<(usize, usize)>,
    pub grid: Grid1D,
}

impl CandidateLibrary {
    pub fn n_samples(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.theta.ncols()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(describe_term).collect()
    }

    pub fn index_of(&self, term: &TermDescriptor) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// Indices of columns that are exactly zero.
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.n_terms())
            .filter(|&j| self.theta.column(j).iter().all(|&v| v == 0.0))
            .collect()
    }
}

/// Evaluates every candidate term on the retained levels of `field`.
///
/// Derivative matrices are computed once per order and combined pointwise;
/// the target is the centered `u_t` at the library's accuracy.
pub fn build_library(field: &SolutionField, spec: &LibrarySpec) -> Result<CandidateLibrary> {
    spec.validate()?;
    let need = spec.temporal_half_width()?;
    if spec.pad_t < need {
        return Err(Error::InsufficientLevels {
            available: field.grid.nt,
            required: 2 * need + 1,
        });
    }
    let keep = retained_levels(field.grid.nt, spec.pad_t)?;
    let levels: Vec<usize> = keep.clone().collect();
    let nx = field.grid.nx;
    let n = levels.len() * nx;
    let terms = enumerate_terms(spec);

    let flatten = |m: &DMatrix<f64>| -> Vec<f64> {
        let mut v = Vec::with_capacity(n);
        for r in 0..m.nrows() {
            for i in 0..nx {
                v.push(m[(r, i)]);
            }
        }
        v
    };

    let u = {
        let mut v = Vec::with_capacity(n);
        for &j in &levels {
            for i in 0..nx {
                v.push(field.values[(j, i)]);
            }
        }
        v
    };

    let orders: BTreeSet<u32> = terms.iter().flat_map(|t| t.spatial.iter().copied()).collect();
    let mut spatial: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &m in &orders {
        let d = apply_spatial_levels(field, m as usize, spec.accuracy, &levels)?;
        spatial.insert(m, flatten(&d));
    }
    let mut temporal: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for t in terms.iter().filter(|t| t.time_order > 0) {
        let d = apply_temporal(field, t.time_order as usize, spec.accuracy, spec.pad_t)?;
        temporal.insert(t.time_order, flatten(&d));
    }
    let max_power = terms.iter().map(|t| t.u_power).max().unwrap_or(0);
    let mut powers: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for k in 1..=max_power as usize {
        let next: Vec<f64> = powers[k - 1].iter().zip(&u).map(|(a, b)| a * b).collect();
        powers.push(next);
    }

    let mut theta = DMatrix::zeros(n, terms.len());
    for (c, term) in terms.iter().enumerate() {
        let mut col = theta.column_mut(c);
        if term.is_intercept {
            col.fill(1.0);
        } else if term.time_order > 0 {
            col.iter_mut()
                .zip(&temporal[&term.time_order])
                .for_each(|(o, &v)| *o = v);
        } else {
            col.iter_mut()
                .zip(&powers[term.u_power as usize])
                .for_each(|(o, &v)| *o = v);
            for m in &term.spatial {
                col.iter_mut().zip(&spatial[m]).for_each(|(o, &v)| *o *= v);
            }
        }
    }

    let target = flatten(&apply_temporal(field, 1, spec.accuracy, spec.pad_t)?);
    let sample_index = levels.iter().flat_map(|&j| (0..nx).map(move |i| (j, i))).collect();
    Ok(CandidateLibrary {
        terms,
        theta,
        target: DVector::from_vec(target),
        sample_index,
        grid: field.grid,
    })
}
