//! Centered finite-difference stencils of arbitrary derivative order and
//! accuracy, and their application along the periodic space axis and the
//! (non-periodic) time axis.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::SolutionField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    pub derivative: usize,
    pub accuracy: usize,
    pub offsets: Vec<isize>,
    /// Weights for unit spacing; divide by `step^derivative` when applying.
    pub coefficients: Vec<f64>,
}

impl Stencil {
    pub fn half_width(&self) -> usize {
        (self.offsets.len() - 1) / 2
    }

    pub fn width(&self) -> usize {
        self.offsets.len()
    }
}

/// Number of points of the centered stencil for derivative `d` at accuracy `a`.
pub fn centered_width(derivative: usize, accuracy: usize) -> usize {
    2 * derivative.div_ceil(2) + accuracy - 1
}

/// Solves the moment system `sum_j c_j j^m = m! delta_{m,d}` exactly over
/// the rationals, then rounds to `f64`.
fn solve_moments(derivative: usize, offsets: &[isize]) -> Result<Vec<f64>> {
    let n = offsets.len();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|m| {
            let mut row: Vec<BigRational> = offsets
                .iter()
                .map(|&j| BigRational::from_integer(BigInt::from(j).pow(m as u32)))
                .collect();
            let rhs = if m == derivative {
                (1..=m).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
            } else {
                BigInt::zero()
            };
            row.push(BigRational::from_integer(rhs));
            row
        })
        .collect();

    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::Linalg("singular stencil moment system".into()))?;
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for k in col..=n {
            a[col][k] = &a[col][k] / &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for k in col..=n {
                    let v = &f * &a[col][k];
                    a[r][k] -= v;
                }
            }
        }
    }
    a.iter()
        .map(|row| {
            row[n]
                .to_f64()
                .ok_or_else(|| Error::Linalg("stencil weight not representable".into()))
        })
        .collect()
}

type StencilCache = RwLock<HashMap<(usize, usize), Arc<Stencil>>>;

fn cache() -> &'static StencilCache {
    static CACHE: OnceLock<StencilCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Centered stencil for the `derivative`-th derivative with the given even
/// `accuracy` order. Results are cached per `(derivative, accuracy)`.
pub fn make_centered_stencil(derivative: usize, accuracy: usize) -> Result<Arc<Stencil>> {
    if accuracy == 0 || !accuracy.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "stencil accuracy must be a positive even integer, got {accuracy}"
        )));
    }
    if let Some(s) = cache().read().unwrap().get(&(derivative, accuracy)) {
        return Ok(Arc::clone(s));
    }
    let stencil = if derivative == 0 {
        Stencil {
            derivative,
            accuracy,
            offsets: vec![0],
            coefficients: vec![1.0],
        }
    } else {
        let half = (centered_width(derivative, accuracy) / 2) as isize;
        let offsets: Vec<isize> = (-half..=half).collect();
        let coefficients = solve_moments(derivative, &offsets)?;
        Stencil {
            derivative,
            accuracy,
            offsets,
            coefficients,
        }
    };
    let stencil = Arc::new(stencil);
    cache()
        .write()
        .unwrap()
        .entry((derivative, accuracy))
        .or_insert_with(|| Arc::clone(&stencil));
    Ok(stencil)
}

/// Applies a stencil along a periodic sequence.
pub fn apply_periodic(stencil: &Stencil, u: &[f64], step: f64, out: &mut [f64]) {
    let n = u.len();
    let scale = 1.0 / step.powi(stencil.derivative as i32);
    let half = stencil.half_width();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &c) in stencil.coefficients.iter().enumerate() {
            if c != 0.0 {
                let idx = (i + n * (half + 1) + k - half) % n;
                acc += c * u[idx];
            }
        }
        *o = acc * scale;
    }
}

/// Spatial derivative of every stored level, shape `(nt, nx)`.
pub fn apply_spatial(field: &SolutionField, derivative: usize, accuracy: usize) -> Result<DMatrix<f64>> {
    let levels: Vec<usize> = (0..field.grid.nt).collect();
    apply_spatial_levels(field, derivative, accuracy, &levels)
}

/// Spatial derivative on a subset of levels, one output row per requested level.
pub fn apply_spatial_levels(
    field: &SolutionField,
    derivative: usize,
    accuracy: usize,
    levels: &[usize],
) -> Result<DMatrix<f64>> {
    let nx = field.grid.nx;
    let stencil = make_centered_stencil(derivative, accuracy)?;
    if stencil.width() > nx {
        return Err(Error::StencilTooWide {
            width: stencil.width(),
            nx,
        });
    }
    let mut out = DMatrix::zeros(levels.len(), nx);
    let mut row = vec![0.0; nx];
    let mut deriv = vec![0.0; nx];
    for (r, &j) in levels.iter().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = field.values[(j, i)];
        }
        apply_periodic(&stencil, &row, field.grid.dx, &mut deriv);
        for (i, &v) in deriv.iter().enumerate() {
            out[(r, i)] = v;
        }
    }
    Ok(out)
}

/// Levels retained after trimming `pad_t` levels from both ends.
pub fn retained_levels(nt: usize, pad_t: usize) -> Result<std::ops::Range<usize>> {
    if nt < 2 * pad_t + 1 {
        return Err(Error::InsufficientLevels {
            available: nt,
            required: 2 * pad_t + 1,
        });
    }
    Ok(pad_t..nt - pad_t)
}

/// Time derivative on the `nt - 2 pad_t` interior levels; only centered
/// stencils are used, so `pad_t` must cover the stencil half-width.
pub fn apply_temporal(field: &SolutionField, derivative: usize, accuracy: usize, pad_t: usize) -> Result<DMatrix<f64>> {
    let stencil = make_centered_stencil(derivative, accuracy)?;
    let half = stencil.half_width();
    let nt = field.grid.nt;
    if pad_t < half {
        return Err(Error::InsufficientLevels {
            available: nt,
            required: 2 * half + 1,
        });
    }
    let keep = retained_levels(nt, pad_t)?;
    let nx = field.grid.nx;
    let scale = 1.0 / field.grid.dt.powi(derivative as i32);
    let mut out = DMatrix::zeros(keep.len(), nx);
    for (r, j) in keep.enumerate() {
        for i in 0..nx {
            let mut acc = 0.0;
            for (k, &c) in stencil.coefficients.iter().enumerate() {
                if c != 0.0 {
                    acc += c * field.values[(j + k - half, i)];
                }
            }
            out[(r, i)] = acc * scale;
        }
    }
    Ok(out)
}
