//! Explicit finite-difference solvers on the periodic unit interval.
//!
//! Three schemes generate the data that the identification pipeline works on:
//! forward-time backward-space (FTBS) for linear advection, MacCormack's
//! predictor-corrector for inviscid Burgers, and the Zabusky-Kruskal leapfrog
//! scheme for Korteweg-de Vries. All of them can be driven with a
//! manufactured-solution source term for order verification.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible value of the Zabusky-Kruskal stability expression.
pub const KDV_STABILITY_LIMIT: f64 = 0.384_900_179_459_750_5; // 2 / (3 sqrt 3)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    /// `u_t + a u_x = 0` with forward-time backward-space differencing.
    Ftbs { speed: f64 },
    /// `u_t + (u^2/2)_x = 0` with MacCormack's predictor-corrector.
    MacCormack,
    /// `u_t + 6 u u_x + u_xxx = 0` with the Zabusky-Kruskal leapfrog scheme.
    ZabuskyKruskal,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Ftbs { .. } => "ftbs",
            Scheme::MacCormack => "maccormack",
            Scheme::ZabuskyKruskal => "zabusky_kruskal",
        }
    }

    /// Characteristic speed entering the CFL number of this scheme.
    ///
    /// FTBS uses the advection speed; the two nonlinear schemes use `max|u|`
    /// of the initial condition.
    pub fn signal_speed(&self, u0: &[f64]) -> f64 {
        match self {
            Scheme::Ftbs { speed } => speed.abs(),
            Scheme::MacCormack | Scheme::ZabuskyKruskal => max_abs(u0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid1D {
    pub fn new(nx: usize, nt: usize, dt: f64) -> Result<Self> {
        if nx == 0 || nt == 0 {
            return Err(Error::invalid("grid needs nx > 0 and nt > 0"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        Ok(Grid1D {
            nx,
            nt,
            dx: 1.0 / nx as f64,
            dt,
        })
    }

    /// Picks `dt` so that `speed * dt / dx == cfl`.
    pub fn from_cfl(nx: usize, nt: usize, cfl: f64, speed: f64) -> Result<Self> {
        if !(cfl > 0.0) || !(speed > 0.0) {
            return Err(Error::invalid(format!(
                "cfl ({cfl}) and signal speed ({speed}) must be positive"
            )));
        }
        let dx = 1.0 / nx as f64;
        Grid1D::new(nx, nt, cfl * dx / speed)
    }

    /// `dt / dx`
    pub fn h(&self) -> f64 {
        self.dt / self.dx
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.nx).map(|i| i as f64 * self.dx).collect()
    }
}

/// Stored time levels of a simulation, `values[(j, i)] = u(i dx, j dt)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionField {
    pub grid: Grid1D,
    pub values: DMatrix<f64>,
    pub scheme: Scheme,
    pub cfl: f64,
}

impl SolutionField {
    pub fn level(&self, j: usize) -> Vec<f64> {
        self.values.row(j).iter().copied().collect()
    }

    /// Builds a field from a closure, mostly useful for tests and manufactured data.
    pub fn from_fn(grid: Grid1D, scheme: Scheme, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = DMatrix::from_fn(grid.nt, grid.nx, |j, i| f(i as f64 * grid.dx, j as f64 * grid.dt));
        SolutionField {
            grid,
            values,
            scheme,
            cfl: f64::NAN,
        }
    }
}

fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn check_finite(u: &[f64], context: &str) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

fn ftbs_into(u: &[f64], a: f64, h: f64, out: &mut [f64]) {
    let n = u.len();
    let c = a * h;
    out[0] = u[0] - c * (u[0] - u[n - 1]);
    for i in 1..n {
        out[i] = u[i] - c * (u[i] - u[i - 1]);
    }
}

/// One FTBS step, `u_i <- u_i - a h (u_i - u_{i-1})` with periodic wrap.
pub fn ftbs_step(u: &[f64], a: f64, h: f64) -> Result<Vec<f64>> {
    check_finite(u, "ftbs input")?;
    if a * h > 1.0 {
        warn!("FTBS step with CFL {} > 1 is unstable", a * h);
    }
    let mut out = vec![0.0; u.len()];
    ftbs_into(u, a, h, &mut out);
    Ok(out)
}

fn maccormack_into(u: &[f64], h: f64, predictor: &mut [f64], out: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let df = 0.5 * (u[ip] * u[ip] - u[i] * u[i]);
        predictor[i] = u[i] - h * df;
    }
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        let df = 0.5 * (u[ip] * u[ip] - u[i] * u[i]);
        let dfp = 0.5 * (predictor[i] * predictor[i] - predictor[im] * predictor[im]);
        out[i] = u[i] - 0.5 * h * (df + dfp);
    }
}

/// One MacCormack predictor-corrector step for inviscid Burgers.
pub fn maccormack_step(u: &[f64], h: f64) -> Result<Vec<f64>> {
    check_finite(u, "maccormack input")?;
    let cfl = max_abs(u) * h;
    if cfl > 1.0 {
        warn!("MacCormack step with CFL {cfl} > 1 is unstable");
    }
    let mut pred = vec![0.0; u.len()];
    let mut out = vec![0.0; u.len()];
    maccormack_into(u, h, &mut pred, &mut out);
    Ok(out)
}

/// `(u_{i+1} + u_i + u_{i-1}) (u_{i+1} - u_{i-1})` and the five-point
/// third difference `u_{i+2} - 2u_{i+1} + 2u_{i-1} - u_{i-2}`.
#[inline]
fn kdv_differences(u: &[f64], i: usize) -> (f64, f64) {
    let n = u.len();
    let ii = i as isize;
    let um2 = u[wrap(ii - 2, n)];
    let um1 = u[wrap(ii - 1, n)];
    let up1 = u[wrap(ii + 1, n)];
    let up2 = u[wrap(ii + 2, n)];
    let nonlinear = (up1 + u[i] + um1) * (up1 - um1);
    let dispersive = up2 - 2.0 * up1 + 2.0 * um1 - um2;
    (nonlinear, dispersive)
}

fn zk_into(u_prev: &[f64], u_curr: &[f64], h: f64, dx: f64, out: &mut [f64]) {
    let k = h / (dx * dx);
    for i in 0..u_curr.len() {
        let (nl, disp) = kdv_differences(u_curr, i);
        out[i] = u_prev[i] - 2.0 * h * nl - k * disp;
    }
}

fn zk_starter_into(u0: &[f64], h: f64, dx: f64, out: &mut [f64]) {
    let k = h / (2.0 * dx * dx);
    for i in 0..u0.len() {
        let (nl, disp) = kdv_differences(u0, i);
        out[i] = u0[i] - h * nl - k * disp;
    }
}

/// Left-hand side of the Zabusky-Kruskal linear stability bound,
/// `(dt/dx) max |-2u + 1/dx^2|` over the extreme values of `u`.
pub fn kdv_stability_number(u: &[f64], h: f64, dx: f64) -> f64 {
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let inv = 1.0 / (dx * dx);
    h * (-2.0 * hi + inv).abs().max((-2.0 * lo + inv).abs())
}

fn warn_kdv_stability(u: &[f64], h: f64, dx: f64) {
    let s = kdv_stability_number(u, h, dx);
    if s > KDV_STABILITY_LIMIT {
        warn!("Zabusky-Kruskal step violates the stability bound: {s:e} > {KDV_STABILITY_LIMIT:e}");
    }
}

/// One leapfrog step of the Zabusky-Kruskal scheme from levels `j-1` and `j`.
pub fn zabusky_kruskal_step(u_prev: &[f64], u_curr: &[f64], h: f64, dx: f64) -> Result<Vec<f64>> {
    check_finite(u_prev, "zabusky-kruskal previous level")?;
    check_finite(u_curr, "zabusky-kruskal current level")?;
    if u_prev.len() != u_curr.len() {
        return Err(Error::invalid("time levels differ in length"));
    }
    warn_kdv_stability(u_curr, h, dx);
    let mut out = vec![0.0; u_curr.len()];
    zk_into(u_prev, u_curr, h, dx, &mut out);
    Ok(out)
}

/// Uncentered first step of the Zabusky-Kruskal scheme (half-weighted
/// differences, forward in time) used when only the initial level exists.
pub fn zabusky_kruskal_starter(u0: &[f64], h: f64, dx: f64) -> Result<Vec<f64>> {
    check_finite(u0, "zabusky-kruskal initial level")?;
    warn_kdv_stability(u0, h, dx);
    let mut out = vec![0.0; u0.len()];
    zk_starter_into(u0, h, dx, &mut out);
    Ok(out)
}

/// Manufactured solution `sin(2 pi (x + t)) + 0.001` with the source term
/// that makes it exact for the PDE discretised by `scheme`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub scheme: Scheme,
}

impl ManufacturedCase {
    pub const OFFSET: f64 = 0.001;

    pub fn new(scheme: Scheme) -> Self {
        ManufacturedCase { scheme }
    }

    pub fn exact(&self, x: f64, t: f64) -> f64 {
        (2.0 * PI * (x + t)).sin() + Self::OFFSET
    }

    /// PDE residual of [`exact`](Self::exact).
    pub fn source(&self, x: f64, t: f64) -> f64 {
        let w = 2.0 * PI;
        let c = (w * (x + t)).cos();
        let u = self.exact(x, t);
        match self.scheme {
            // u_t + a u_x
            Scheme::Ftbs { speed } => w * c * (1.0 + speed),
            // u_t + u u_x
            Scheme::MacCormack => w * c * (1.0 + u),
            // u_t + 6 u u_x + u_xxx
            Scheme::ZabuskyKruskal => w * c * (1.0 + 6.0 * u) - w * w * w * c,
        }
    }

    /// Maximum of `|u|` at t = 0, which fixes `dt` for a given CFL number.
    pub fn initial_speed(&self) -> f64 {
        1.0 + Self::OFFSET
    }
}

/// Time stepper that only keeps the levels a scheme needs.
struct Stepper<'a> {
    scheme: Scheme,
    grid: Grid1D,
    mms: Option<&'a ManufacturedCase>,
    x: Vec<f64>,
    prev: Option<Vec<f64>>,
    curr: Vec<f64>,
    scratch: Vec<f64>,
    next: Vec<f64>,
    step: usize,
}

impl<'a> Stepper<'a> {
    fn new(scheme: Scheme, grid: Grid1D, u0: &[f64], mms: Option<&'a ManufacturedCase>) -> Self {
        let nx = grid.nx;
        Stepper {
            scheme,
            grid,
            mms,
            x: grid.x(),
            prev: None,
            curr: u0.to_vec(),
            scratch: vec![0.0; nx],
            next: vec![0.0; nx],
            step: 0,
        }
    }

    fn advance(&mut self) -> Result<&[f64]> {
        let h = self.grid.h();
        let dt = self.grid.dt;
        let dx = self.grid.dx;
        let t = self.step as f64 * dt;
        match self.scheme {
            Scheme::Ftbs { speed } => {
                ftbs_into(&self.curr, speed, h, &mut self.next);
                if let Some(m) = self.mms {
                    for (v, &x) in self.next.iter_mut().zip(&self.x) {
                        *v += dt * m.source(x, t);
                    }
                }
            }
            Scheme::MacCormack => match self.mms {
                None => maccormack_into(&self.curr, h, &mut self.scratch, &mut self.next),
                Some(m) => {
                    let n = self.curr.len();
                    let u = &self.curr;
                    for i in 0..n {
                        let ip = (i + 1) % n;
                        let df = 0.5 * (u[ip] * u[ip] - u[i] * u[i]);
                        self.scratch[i] = u[i] - h * df + dt * m.source(self.x[i], t);
                    }
                    let p = &self.scratch;
                    for i in 0..n {
                        let im = (i + n - 1) % n;
                        let dfp = 0.5 * (p[i] * p[i] - p[im] * p[im]);
                        self.next[i] = 0.5 * (u[i] + p[i] - h * dfp + dt * m.source(self.x[i], t + dt));
                    }
                }
            },
            Scheme::ZabuskyKruskal => {
                match &self.prev {
                    None => zk_starter_into(&self.curr, h, dx, &mut self.next),
                    Some(prev) => zk_into(prev, &self.curr, h, dx, &mut self.next),
                }
                if let Some(m) = self.mms {
                    let w = if self.prev.is_none() { dt } else { 2.0 * dt };
                    for (v, &x) in self.next.iter_mut().zip(&self.x) {
                        *v += w * m.source(x, t);
                    }
                }
            }
        }
        self.step += 1;
        if self.next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                scheme: self.scheme.name().to_string(),
                step: self.step,
            });
        }
        // rotate buffers: prev <- curr <- next
        let next = std::mem::replace(&mut self.next, vec![0.0; 0]);
        let old = std::mem::replace(&mut self.curr, next);
        self.next = match self.prev.replace(old) {
            Some(buf) => buf,
            None => vec![0.0; self.grid.nx],
        };
        if !matches!(self.scheme, Scheme::ZabuskyKruskal) {
            self.prev = None;
        }
        Ok(&self.curr)
    }
}

fn warn_stability(scheme: Scheme, grid: &Grid1D, u0: &[f64]) {
    let h = grid.h();
    match scheme {
        Scheme::Ftbs { speed } if speed.abs() * h > 1.0 => {
            warn!("FTBS run with CFL {} > 1", speed.abs() * h)
        }
        Scheme::MacCormack if max_abs(u0) * h > 1.0 => {
            warn!("MacCormack run with CFL {} > 1", max_abs(u0) * h)
        }
        Scheme::ZabuskyKruskal => warn_kdv_stability(u0, h, grid.dx),
        _ => {}
    }
}

/// Runs `grid.nt - 1` steps from `u0` and returns every level, including the
/// initial one. With `mms`, the discrete source term is added every step.
pub fn run_simulation(
    scheme: Scheme,
    u0: &[f64],
    grid: Grid1D,
    mms: Option<&ManufacturedCase>,
) -> Result<SolutionField> {
    if u0.len() != grid.nx {
        return Err(Error::invalid(format!(
            "initial condition has {} points, grid has {}",
            u0.len(),
            grid.nx
        )));
    }
    check_finite(u0, "initial condition")?;
    warn_stability(scheme, &grid, u0);
    let mut values = DMatrix::zeros(grid.nt, grid.nx);
    values.row_mut(0).iter_mut().zip(u0).for_each(|(v, &u)| *v = u);
    let mut stepper = Stepper::new(scheme, grid, u0, mms);
    for j in 1..grid.nt {
        let level = stepper.advance()?;
        values.row_mut(j).iter_mut().zip(level).for_each(|(v, &u)| *v = u);
    }
    Ok(SolutionField {
        grid,
        values,
        scheme,
        cfl: scheme.signal_speed(u0) * grid.h(),
    })
}

/// Steps `steps` times and returns only the final level.
pub fn run_to_final(
    scheme: Scheme,
    u0: &[f64],
    grid: Grid1D,
    steps: usize,
    mms: Option<&ManufacturedCase>,
) -> Result<Vec<f64>> {
    check_finite(u0, "initial condition")?;
    warn_stability(scheme, &grid, u0);
    let mut stepper = Stepper::new(scheme, grid, u0, mms);
    for _ in 0..steps {
        stepper.advance()?;
    }
    Ok(stepper.curr)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub nx: usize,
    pub steps: usize,
    pub dt: f64,
    /// Root-mean-square error over the grid (discrete L2 norm on [0, 1)).
    pub l2: Option<f64>,
    pub linf: Option<f64>,
    /// Order from the previous resolution, `log(e_prev / e) / log(nx / nx_prev)`.
    pub order_l2: Option<f64>,
    pub order_linf: Option<f64>,
    pub failure: Option<String>,
}

/// Evaluation time used by the manufactured-solution study of each scheme.
pub fn mms_test_time(scheme: &Scheme) -> f64 {
    match scheme {
        Scheme::ZabuskyKruskal => 1e-8,
        _ => 0.1,
    }
}

/// Forced runs at each resolution with `dt` refined together with `dx`.
///
/// `dt` is rounded down so that an integer number of steps lands exactly on
/// the evaluation time. Unstable resolutions produce a record with `failure`
/// set instead of being dropped.
pub fn mms_convergence(
    scheme: Scheme,
    resolutions: &[usize],
    cfl: f64,
    t_test: Option<f64>,
) -> Result<Vec<ConvergenceRecord>> {
    if resolutions.len() < 2 {
        return Err(Error::invalid("convergence study needs at least two resolutions"));
    }
    let case = ManufacturedCase::new(scheme);
    let t_end = t_test.unwrap_or_else(|| mms_test_time(&scheme));
    let speed = match scheme {
        Scheme::Ftbs { speed } => speed.abs(),
        _ => case.initial_speed(),
    };
    let mut out: Vec<ConvergenceRecord> = Vec::with_capacity(resolutions.len());
    for &nx in resolutions {
        let dx = 1.0 / nx as f64;
        let dt_target = cfl * dx / speed;
        let steps = (t_end / dt_target).ceil().max(1.0) as usize;
        let dt = t_end / steps as f64;
        let grid = Grid1D::new(nx, steps + 1, dt)?;
        let x = grid.x();
        let u0: Vec<f64> = x.iter().map(|&x| case.exact(x, 0.0)).collect();
        let mut rec = ConvergenceRecord {
            nx,
            steps,
            dt,
            l2: None,
            linf: None,
            order_l2: None,
            order_linf: None,
            failure: None,
        };
        match run_to_final(scheme, &u0, grid, steps, Some(&case)) {
            Ok(u) => {
                let t = steps as f64 * dt;
                let (mut sq, mut mx) = (0.0_f64, 0.0_f64);
                for (&ui, &xi) in u.iter().zip(&x) {
                    let e = (ui - case.exact(xi, t)).abs();
                    sq += e * e;
                    mx = mx.max(e);
                }
                rec.l2 = Some((sq / nx as f64).sqrt());
                rec.linf = Some(mx);
                if let Some(prev) = out.last() {
                    let ratio = (nx as f64 / prev.nx as f64).ln();
                    rec.order_l2 = prev.l2.map(|e| (e / rec.l2.unwrap()).ln() / ratio);
                    rec.order_linf = prev.linf.map(|e| (e / mx).ln() / ratio);
                }
            }
            Err(e) => rec.failure = Some(e.to_string()),
        }
        out.push(rec);
    }
    Ok(out)
}
