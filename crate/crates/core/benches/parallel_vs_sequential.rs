//! Rayon against plain iteration for the three data-parallel hot spots:
//! the swarm's fitness evaluations, the hyperparameter sweeps and the
//! resolution study.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdeid::linalg::thin_qr;
use mdeid::pipeline::{resolution_study, IcMode};
use mdeid::regress::{run_sweep, RegressionProblem, SweepGrids};
use mdeid::swarm::{minimize, GridSpec, SwarmConfig};
use mdeid::{Algorithm, LibrarySpec, Parallelism, PipelineConfig, Scheme};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [Parallelism; 2] = [Parallelism::Sequential, Parallelism::Rayon];

fn swarm(c: &mut Criterion) {
    let mut g = c.benchmark_group("swarm");
    g.sample_size(10);
    // fitness with enough work per particle to be worth distributing
    let fitness = |x: &[f64]| -> f64 {
        (0..20_000)
            .map(|k| {
                let t = k as f64 * 1e-4;
                x.iter()
                    .enumerate()
                    .map(|(i, v)| (v - t.sin() / (i + 1) as f64).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    let bounds = vec![(-1.0, 1.0); 15];
    for mode in MODES {
        let cfg = SwarmConfig {
            particles: 32,
            iterations: 5,
            parallelism: mode,
            ..SwarmConfig::default()
        };
        g.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| minimize(&bounds, &cfg, fitness).unwrap())
        });
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = thin_qr(&DMatrix::from_fn(2000, 40, |_, _| rng.random_range(-1.0..1.0))).0;
    let mut xi = DVector::zeros(40);
    xi[3] = 1.0;
    xi[17] = -0.4;
    xi[31] = 0.05;
    let y = &q * &xi + DVector::from_fn(2000, |_, _| 1e-6 * rng.random_range(-1.0..1.0));
    let problem = RegressionProblem::new(q, y).unwrap();
    let grids = SweepGrids::default();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for algorithm in [Algorithm::Lasso, Algorithm::Stridge, Algorithm::Sr3] {
        for mode in MODES {
            g.bench_function(BenchmarkId::new(algorithm.name(), format!("{mode:?}")), |b| {
                b.iter(|| run_sweep(&problem, algorithm, &grids, mode).unwrap())
            });
        }
    }
    g.finish();
}

fn study(c: &mut Criterion) {
    let base = PipelineConfig {
        name: "bench".into(),
        scheme: Scheme::Ftbs { speed: 1.0 },
        grid: GridSpec {
            nx: 200,
            nt: 17,
            cfl: 0.01,
        },
        library: LibrarySpec::advection_small(),
        ic_mode: IcMode::Gauss,
        ic_library: None,
        swarm: SwarmConfig {
            particles: 10,
            iterations: 5,
            ..SwarmConfig::default()
        },
        training_knots: 15,
        test_knots: 11,
        test_seed: 1,
        training_spline: None,
        test_spline: None,
        provided_ic: None,
        use_puffer: false,
        algorithm: Algorithm::Foba,
        grids: SweepGrids::default(),
        n_eff: None,
        parallelism: Parallelism::Sequential,
    };
    // the test spline search is shared; do it once outside the timing
    let base = mdeid::pipeline::with_cached_splines(&base).unwrap();
    let nx = [200, 250, 300, 350];
    let mut g = c.benchmark_group("resolution_study");
    g.sample_size(10);
    for mode in MODES {
        let cfg = PipelineConfig {
            parallelism: mode,
            ..base.clone()
        };
        g.bench_function(BenchmarkId::from_parameter(format!("{mode:?}")), |b| {
            b.iter(|| resolution_study(&cfg, &nx, &[17]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, swarm, sweeps, study);
criterion_main!(benches);
