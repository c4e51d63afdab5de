//! Global-best particle swarm optimisation and the initial-condition search
//! built on it.
//!
//! Fitness values of one iteration are computed concurrently and collected in
//! particle order; every random draw happens in the serial update, so a seed
//! fixes the whole run regardless of the execution mode.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::library::{build_library, LibrarySpec};
use crate::precondition::{rms_vif, VifMethod, VifOptions};
use crate::solvers::{run_simulation, Grid1D, Scheme};
use crate::spline::{PeriodicSpline, SplineArtifact, DEFAULT_DEGREE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    /// Initial velocities are drawn from `+-velocity_scale * (upper - lower)`.
    pub velocity_scale: f64,
    /// Also optimise rational weights within `weight_bounds`.
    pub rational_weights: bool,
    pub weight_bounds: (f64, f64),
    pub parallelism: Parallelism,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            particles: 50,
            iterations: 100,
            inertia: 0.729,
            cognitive: 1.494_45,
            social: 1.494_45,
            seed: 0,
            lower: -1.0,
            upper: 1.0,
            velocity_scale: 0.1,
            rational_weights: false,
            weight_bounds: (0.1, 10.0),
            parallelism: Parallelism::default(),
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 1 || self.iterations < 1 {
            return Err(Error::invalid("swarm needs at least one particle and one iteration"));
        }
        if !(self.lower < self.upper) {
            return Err(Error::invalid(format!(
                "swarm bounds [{}, {}] are empty",
                self.lower, self.upper
            )));
        }
        if self.rational_weights && !(0.0 < self.weight_bounds.0 && self.weight_bounds.0 < self.weight_bounds.1) {
            return Err(Error::invalid("weight bounds must satisfy 0 < lower < upper"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Global best after each iteration; non-increasing.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Minimises `fitness` over the box `bounds`. Non-finite fitness values are
/// treated as `+inf`. The first iteration evaluates the initial swarm.
pub fn minimize<F>(bounds: &[(f64, f64)], cfg: &SwarmConfig, fitness: F) -> Result<SwarmResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::invalid("swarm needs at least one dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pos: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    let v = cfg.velocity_scale * (hi - lo);
                    if v > 0.0 {
                        rng.random_range(-v..=v)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let eval = |pos: &Vec<Vec<f64>>| -> Vec<f64> {
        exec::map(cfg.parallelism, pos, |p| {
            let f = fitness(p);
            if f.is_finite() {
                f
            } else {
                f64::INFINITY
            }
        })
    };

    let mut fit = eval(&pos);
    let mut pbest = pos.clone();
    let mut pbest_fit = fit.clone();
    let (mut gbest_idx, mut gbest_fit) = argmin(&pbest_fit);
    let mut gbest = pbest[gbest_idx].clone();
    let mut trace = vec![gbest_fit];
    let mut evaluations = cfg.particles;

    for it in 1..cfg.iterations {
        for i in 0..cfg.particles {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.inertia * vel[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + cfg.social * r2 * (gbest[d] - pos[i][d]);
                let (lo, hi) = bounds[d];
                let x = pos[i][d] + v;
                if x < lo {
                    pos[i][d] = lo;
                    vel[i][d] = 0.0;
                } else if x > hi {
                    pos[i][d] = hi;
                    vel[i][d] = 0.0;
                } else {
                    pos[i][d] = x;
                    vel[i][d] = v;
                }
            }
        }
        fit = eval(&pos);
        evaluations += cfg.particles;
        for i in 0..cfg.particles {
            if fit[i] < pbest_fit[i] {
                pbest_fit[i] = fit[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        let (idx, best) = argmin(&pbest_fit);
        if best < gbest_fit {
            gbest_idx = idx;
            gbest_fit = best;
            gbest.clone_from(&pbest[idx]);
        }
        trace.push(gbest_fit);
        debug!("pso iteration {it}: gbest {gbest_fit:.6e} (particle {gbest_idx})");
    }
    if !gbest_fit.is_finite() {
        return Err(Error::AllParticlesUnstable);
    }
    Ok(SwarmResult {
        best_position: gbest,
        best_fitness: gbest_fit,
        trace,
        evaluations,
    })
}

/// Smallest value, lowest index on ties.
fn argmin(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

/// Grid resolution and CFL number; `dt` follows from the initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nt: usize,
    pub cfl: f64,
}

impl GridSpec {
    pub fn grid_for(&self, scheme: &Scheme, u0: &[f64]) -> Result<Grid1D> {
        Grid1D::from_cfl(self.nx, self.nt, self.cfl, scheme.signal_speed(u0))
    }
}

/// RMS-VIF of the library produced by simulating from `u0`.
pub fn ic_fitness(scheme: Scheme, grid: &GridSpec, spec: &LibrarySpec, u0: &[f64], vif: &VifOptions) -> Result<f64> {
    let g = grid.grid_for(&scheme, u0)?;
    let field = run_simulation(scheme, u0, g, None)?;
    let lib = build_library(&field, spec)?;
    rms_vif(&lib.theta, vif)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcOptimization {
    pub artifact: SplineArtifact,
    pub u0: Vec<f64>,
}

/// Searches spline control values that minimise the RMS-VIF of the library
/// built from the simulated data. Unstable candidates score `+inf`.
pub fn optimize_ic(
    scheme: Scheme,
    grid: &GridSpec,
    spec: &LibrarySpec,
    swarm: &SwarmConfig,
    knots: usize,
) -> Result<IcOptimization> {
    spec.validate()?;
    if knots == 0 {
        return Err(Error::invalid("spline needs at least one knot"));
    }
    let vif = VifOptions {
        method: VifMethod::Gram,
        ..VifOptions::default()
    };
    let mut bounds = vec![(swarm.lower, swarm.upper); knots];
    if swarm.rational_weights {
        bounds.extend(std::iter::repeat_n(swarm.weight_bounds, knots));
    }
    let build = |p: &[f64]| -> Result<PeriodicSpline> {
        let s = PeriodicSpline::new(DEFAULT_DEGREE, p[..knots].to_vec())?;
        if swarm.rational_weights {
            s.with_weights(p[knots..].to_vec())
        } else {
            Ok(s)
        }
    };
    let result = minimize(&bounds, swarm, |p| {
        let s = match build(p) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let u0 = s.sample(grid.nx);
        ic_fitness(scheme, grid, spec, &u0, &vif).unwrap_or(f64::INFINITY)
    })?;
    info!(
        "initial-condition search ({} knots): RMS-VIF {:.4e} after {} evaluations",
        knots, result.best_fitness, result.evaluations
    );
    let spline = build(&result.best_position)?;
    let u0 = spline.sample(grid.nx);
    Ok(IcOptimization {
        artifact: SplineArtifact {
            knots: spline.knots(),
            spline,
            seed: swarm.seed,
            fitness: result.best_fitness,
            trace: result.trace,
        },
        u0,
    })
}
