use mdeid::linalg::{condition_number, thin_qr};
use mdeid::oracle::empirical_order;
use mdeid::precondition::{
    compute_vif, puffer_transform, scale_columns, VifMethod, VifOptions, DEFAULT_PUFFER_RANK_TOL,
};
use mdeid::regress::lasso;
use mdeid::select::bic_value;
use mdeid::solvers::{ftbs_step, maccormack_step, zabusky_kruskal_step};
use mdeid::{AnalyticMde, CandidateLibrary, CaseId, Grid1D, TermDescriptor};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const ORDER: usize = 7;

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ORDER + 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate().take(ORDER + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Taylor coefficients of `ln(1 - c (1 - e^-z))`, the log of the FTBS
/// amplification factor with `z = i k dx` and `c = a dt/dx`.
fn log_symbol(c: f64) -> Vec<f64> {
    // w = c (e^-z - 1)
    let mut w = vec![0.0; ORDER + 1];
    let mut fact = 1.0;
    for (n, wn) in w.iter_mut().enumerate().skip(1) {
        fact *= n as f64;
        *wn = c * if n % 2 == 0 { 1.0 } else { -1.0 } / fact;
    }
    let mut out = vec![0.0; ORDER + 1];
    let mut power = w.clone();
    for k in 1..=ORDER {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        for m in 0..=ORDER {
            out[m] += sign * power[m] / k as f64;
        }
        power = mul(&power, &w);
    }
    out
}

/// MacCormack written as one explicit update instead of predictor and corrector.
fn maccormack_single_equation(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let (a, b, c) = (u[(i + n - 1) % n], u[i], u[(i + 1) % n]);
            let d1 = c * c - a * a;
            let d2 = c * c - 2.0 * b * b + a * a;
            b - h * d1 / 4.0 + 0.5 * h * h * ((b + a) / 2.0 * d2 / 2.0 + (b - a) * d1 / 4.0)
                - 0.5 * h * h * h * d1 / 4.0 * d2 / 2.0
        })
        .collect()
}

fn rotate(u: &[f64], k: usize) -> Vec<f64> {
    let mut v = u.to_vec();
    v.rotate_right(k);
    v
}

fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    // small LCG so the design only depends on the proptest input
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    DMatrix::from_fn(n, p, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

fn library_of(theta: DMatrix<f64>) -> CandidateLibrary {
    let n = theta.nrows();
    CandidateLibrary {
        terms: (0..theta.ncols())
            .map(|j| TermDescriptor::product(1, &[j as u32 + 1]))
            .collect(),
        target: DVector::from_fn(n, |i, _| (0.1 * i as f64).cos()),
        theta,
        sample_index: (0..n).map(|i| (0, i)).collect(),
        grid: Grid1D::new(n, 1, 1.0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The tabulated advection coefficients agree with the series expansion
    /// of the exact amplification factor: `c_m dt / dx^m = [z^m] ln G(z)`.
    #[test]
    fn advection_coefficients_match_the_symbol(a in 0.2f64..2.0, c in 0.001f64..0.95, nx in 50usize..2000) {
        let dx = 1.0 / nx as f64;
        let h = c / a;
        let mde = AnalyticMde::new(CaseId::AdvectionFtbs, dx, h, Some(a)).unwrap();
        let series = log_symbol(c);
        prop_assert_eq!(mde.terms.len(), 6);
        for m in 1..=6u32 {
            let name = format!("u_{}", "x".repeat(m as usize));
            let t = TermDescriptor::parse(&name).unwrap();
            let tabulated = mde.coefficient(&t).unwrap() * (h * dx) / dx.powi(m as i32);
            prop_assert!((tabulated - series[m as usize]).abs() <= 1e-12, "{}: {} vs {}", name, tabulated, series[m as usize]);
            prop_assert_eq!(mde.theoretical_order(&t), Some(m as i32 - 1));
        }
    }

    #[test]
    fn empirical_order_recovers_power_laws(c in 1e-12f64..1e3, k in -1.0f64..8.0, dx0 in 1e-4f64..1e-1) {
        let series: Vec<(f64, f64)> = (0..4).map(|i| {
            let dx = dx0 / (1.0 + 0.5 * i as f64);
            (dx, -c * dx.powf(k))
        }).collect();
        let est = empirical_order(&series).unwrap();
        prop_assert!((est.order.unwrap() - k).abs() < 1e-8);
        prop_assert!(est.pairwise.iter().all(|o| o.is_some()));
    }

    #[test]
    fn sign_flips_are_excluded_from_orders(c in 0.1f64..10.0) {
        let est = empirical_order(&[(0.1, c), (0.05, -c), (0.025, -c / 4.0)]).unwrap();
        prop_assert!(est.pairwise[0].is_none());
        prop_assert!((est.order.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vif_is_invariant_to_column_scaling(seed in any::<u64>(), exps in prop::collection::vec(-8.0f64..8.0, 6)) {
        let theta = random_matrix(80, 6, seed);
        let mut scaled = theta.clone();
        for (j, e) in exps.iter().enumerate() {
            scaled.column_mut(j).scale_mut(10f64.powf(*e));
        }
        for method in [VifMethod::Qr, VifMethod::Gram] {
            let opts = VifOptions { method, ..VifOptions::default() };
            let a = compute_vif(&theta, &opts).unwrap();
            let b = compute_vif(&scaled, &opts).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-6 * x);
                prop_assert!(*x >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn vif_routes_agree(seed in any::<u64>()) {
        let theta = random_matrix(60, 8, seed);
        let qr = compute_vif(&theta, &VifOptions::default()).unwrap();
        let gram = compute_vif(&theta, &VifOptions { method: VifMethod::Gram, ..VifOptions::default() }).unwrap();
        for (x, y) in qr.values.iter().zip(&gram.values) {
            prop_assert!((x - y).abs() <= 1e-9 * x);
        }
    }

    #[test]
    fn puffer_orthonormalises_full_rank_systems(seed in any::<u64>(), exps in prop::collection::vec(-6.0f64..6.0, 10)) {
        let mut theta = random_matrix(150, 10, seed);
        for (j, e) in exps.iter().enumerate() {
            theta.column_mut(j).scale_mut(10f64.powf(*e));
        }
        let scaled = scale_columns(&library_of(theta)).unwrap();
        for col in scaled.theta.column_iter() {
            prop_assert!((col.norm_squared() - 1.0).abs() <= 1e-12);
        }
        let p = puffer_transform(&scaled, DEFAULT_PUFFER_RANK_TOL).unwrap();
        let g = p.theta.tr_mul(&p.theta) - DMatrix::identity(10, 10);
        prop_assert!(g.amax() <= 1e-8);
        prop_assert!(condition_number(&p.theta) <= 1.0 + 1e-6);
    }

    #[test]
    fn lasso_is_soft_thresholding_on_orthonormal_designs(seed in any::<u64>(), lambda in 0.0f64..0.5) {
        let q = thin_qr(&random_matrix(100, 8, seed)).0;
        let y = DVector::from_fn(100, |i, _| ((i * 3) as f64).sin());
        let c = q.tr_mul(&y);
        let fit = lasso(&q, &y, lambda);
        let expect = c.map(|v| v.signum() * (v.abs() - lambda).max(0.0));
        prop_assert!((fit.coefficients - expect).amax() <= 1e-8);
    }

    #[test]
    fn bic_prefers_smaller_residuals_and_fewer_terms(n in 10usize..100_000, r in 1e-30f64..1e3, k in 0usize..50) {
        prop_assert!(bic_value(n, r * 0.5, k) > bic_value(n, r, k));
        prop_assert!(bic_value(n, r, k) > bic_value(n, r, k + 1));
    }

    #[test]
    fn conservative_schemes_preserve_the_mean(u in prop::collection::vec(-1.0f64..1.0, 16..64), h in 0.01f64..0.4) {
        let before: f64 = u.iter().sum();
        let a = ftbs_step(&u, 1.0, h).unwrap();
        let b = maccormack_step(&u, h).unwrap();
        prop_assert!((a.iter().sum::<f64>() - before).abs() <= 1e-12 * u.len() as f64);
        prop_assert!((b.iter().sum::<f64>() - before).abs() <= 1e-12 * u.len() as f64);
    }

    #[test]
    fn maccormack_forms_agree(u in prop::collection::vec(-1.0f64..1.0, 8..64), h in 0.01f64..0.9) {
        let a = maccormack_step(&u, h).unwrap();
        let b = maccormack_single_equation(&u, h);
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn steps_commute_with_periodic_shifts(u in prop::collection::vec(-1.0f64..1.0, 8..48), k in 1usize..8, h in 0.01f64..0.5) {
        let k = k % u.len();
        let prev: Vec<f64> = u.iter().map(|v| 0.9 * v).collect();
        let dx = 1.0 / u.len() as f64;
        let hz = 1e-4 * dx * dx;
        let pairs = [
            (ftbs_step(&rotate(&u, k), 1.0, h).unwrap(), rotate(&ftbs_step(&u, 1.0, h).unwrap(), k)),
            (maccormack_step(&rotate(&u, k), h).unwrap(), rotate(&maccormack_step(&u, h).unwrap(), k)),
            (
                zabusky_kruskal_step(&rotate(&prev, k), &rotate(&u, k), hz, dx).unwrap(),
                rotate(&zabusky_kruskal_step(&prev, &u, hz, dx).unwrap(), k),
            ),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zabusky_kruskal_conserves_the_mean(u in prop::collection::vec(-1.0f64..1.0, 8..48), h in 1e-6f64..1e-3) {
        let prev: Vec<f64> = u.iter().map(|v| v + 0.01 * v.sin()).collect();
        let dx = 1.0 / u.len() as f64;
        let next = zabusky_kruskal_step(&prev, &u, h, dx).unwrap();
        let before: f64 = prev.iter().sum();
        let after: f64 = next.iter().sum();
        let mass: f64 = prev.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((after - before).abs() <= 1e-12 * mass);
    }
}
