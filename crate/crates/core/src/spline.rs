//! Periodic uniform B-splines (optionally rational) used to parametrise
//! initial conditions, and the fixed Gaussian initial condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 8;
pub const TRAINING_KNOTS: usize = 15;
pub const TEST_KNOTS: usize = 11;

/// Closed spline on `[0, 1)` with `n` uniformly spaced knots and one control
/// value per knot. Basis function `j` is the cardinal B-spline starting at
/// knot `j`, wrapped around the seam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSpline {
    pub degree: usize,
    pub control_values: Vec<f64>,
    /// Rational weights; `None` means all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl PeriodicSpline {
    pub fn new(degree: usize, control_values: Vec<f64>) -> Result<Self> {
        if control_values.is_empty() {
            return Err(Error::invalid("spline needs at least one control value"));
        }
        if degree == 0 {
            return Err(Error::invalid("spline degree must be at least 1"));
        }
        Ok(PeriodicSpline {
            degree,
            control_values,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.control_values.len() {
            return Err(Error::invalid("one weight per control value required"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("spline weights must be positive"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn knot_count(&self) -> usize {
        self.control_values.len()
    }

    /// Knot positions inside the domain.
    pub fn knots(&self) -> Vec<f64> {
        let n = self.knot_count();
        (0..n).map(|k| k as f64 / n as f64).collect()
    }

    pub fn evaluate_at(&self, x: f64) -> f64 {
        let n = self.knot_count();
        let t = x.rem_euclid(1.0) * n as f64;
        match &self.weights {
            None => de_boor(self.degree, t, |j| {
                self.control_values[j.rem_euclid(n as isize) as usize]
            }),
            Some(w) => {
                let idx = |j: isize| j.rem_euclid(n as isize) as usize;
                let num = de_boor(self.degree, t, |j| w[idx(j)] * self.control_values[idx(j)]);
                let den = de_boor(self.degree, t, |j| w[idx(j)]);
                num / den
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| self.evaluate_at(xi)).collect()
    }

    /// Samples the spline on the `nx`-point periodic grid `i / nx`.
    pub fn sample(&self, nx: usize) -> Vec<f64> {
        (0..nx).map(|i| self.evaluate_at(i as f64 / nx as f64)).collect()
    }
}

/// de Boor's algorithm on the integer knot sequence. `control(j)` is the
/// coefficient of the basis function supported on `[j, j + degree + 1)`.
fn de_boor(degree: usize, t: f64, control: impl Fn(isize) -> f64) -> f64 {
    let p = degree as isize;
    let mut span = t.floor() as isize;
    // guard the right end of the last interval against rounding
    if t - span as f64 >= 1.0 {
        span += 1;
    }
    let mut d: Vec<f64> = (0..=p).map(|k| control(span - p + k)).collect();
    for r in 1..=p {
        for k in (r..=p).rev() {
            let j = span - p + k;
            let alpha = (t - j as f64) / (p + 1 - r) as f64;
            d[k as usize] = (1.0 - alpha) * d[k as usize - 1] + alpha * d[k as usize];
        }
    }
    d[p as usize]
}

/// Gaussian bell at `x = 0.5` plus its two periodic images.
pub fn gauss_ic(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&x| {
            (-50.0 * (x - 0.5).powi(2)).exp() + (-50.0 * (x + 0.5).powi(2)).exp() + (-50.0 * (x - 1.5).powi(2)).exp()
        })
        .collect()
}

/// Stored result of an initial-condition search, reusable across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineArtifact {
    pub spline: PeriodicSpline,
    pub knots: Vec<f64>,
    pub seed: u64,
    pub fitness: f64,
    pub trace: Vec<f64>,
}

impl SplineArtifact {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: SplineArtifact = serde_json::from_str(s).map_err(|e| Error::invalid(format!("spline artifact: {e}")))?;
        PeriodicSpline::new(a.spline.degree, a.spline.control_values.clone())?;
        Ok(a)
    }
}
