mod common;

use common::{kron, random_panel, random_stable_psi, random_weights, rng, vec_cols};
use cosmar::estimate::{concentrated_loglik, fit, loglik, FitOptions};
use cosmar::model::{log_det_dense, residuals, stability_check, ModelParams, SpatialFilter};
use cosmar::simplex::{
    aitchison_dist, aitchison_inner, closure, closure_with_policy, clr, perturb, power, BasisMode, Composition, IlrBasis, Partition,
    ZeroPolicy,
};
use cosmar::simulate::{simulate, simulate_with_innovations, RegressorSpec, SimConfig};
use cosmar::weights::{distance_cutoff, from_adjacency, rook_grid, SpatialWeights};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn parts(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e3, d)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=6).prop_flat_map(|d| (parts(d), parts(d)))
}

fn comp(v: &[f64]) -> Composition {
    closure(v, 1.0).unwrap()
}

/// A sequential binary partition over a shuffled order of the parts.
fn random_partition(order: &[usize], cuts: &mut impl Iterator<Item = usize>) -> Partition {
    if order.len() == 1 {
        return Partition::Leaf(order[0]);
    }
    let cut = 1 + cuts.next().unwrap_or(0) % (order.len() - 1);
    let (left, right) = order.split_at(cut);
    Partition::Split(Box::new(random_partition(left, cuts)), Box::new(random_partition(right, cuts)))
}

fn bases(d: usize, seed: u64) -> Vec<IlrBasis> {
    let mut r = rng(seed);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut r);
    let cuts: Vec<usize> = (0..d).map(|_| r.random_range(0..64)).collect();
    let partition = random_partition(&order, &mut cuts.into_iter());
    vec![
        IlrBasis::helmert(d).unwrap(),
        IlrBasis::pivot(d).unwrap(),
        IlrBasis::balanced(d).unwrap(),
        IlrBasis::build(d, BasisMode::Balance(partition)).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn ilr_is_an_isometry((a, b) in pair(), seed in any::<u64>()) {
        let (x, y) = (comp(&a), comp(&b));
        let dist = aitchison_dist(&x, &y).unwrap();
        let inner = aitchison_inner(&x, &y).unwrap();
        for basis in bases(a.len(), seed) {
            let (u, v) = (basis.ilr(&x).unwrap(), basis.ilr(&y).unwrap());
            prop_assert!((dist - (&u - &v).norm()).abs() < 1e-10);
            prop_assert!((inner - u.dot(&v)).abs() < 1e-10 * inner.abs().max(1.0));
        }
    }

    #[test]
    fn ilr_is_linear((a, b) in pair(), xi in -3.0f64..3.0, seed in any::<u64>()) {
        let (x, y) = (comp(&a), comp(&b));
        for basis in bases(a.len(), seed) {
            let (u, v) = (basis.ilr(&x).unwrap(), basis.ilr(&y).unwrap());
            let sum = basis.ilr(&perturb(&x, &y).unwrap()).unwrap();
            prop_assert!((sum - (&u + &v)).amax() < 1e-10);
            let scaled = basis.ilr(&power(xi, &x).unwrap()).unwrap();
            prop_assert!((scaled - &u * xi).amax() < 1e-10);
        }
    }

    #[test]
    fn clr_and_ilr_agree((a, _) in pair(), seed in any::<u64>()) {
        let x = comp(&a);
        let z = clr(&x);
        for basis in bases(a.len(), seed) {
            let v = basis.contrast();
            let coords = basis.ilr(&x).unwrap();
            prop_assert!((&coords - v * &z).amax() < 1e-12 * z.amax().max(1.0));
            prop_assert!((basis.ilr_to_clr(&coords) - v.transpose() * &coords).amax() < 1e-12 * z.amax().max(1.0));
            prop_assert!((basis.ilr_to_clr(&coords) - &z).amax() < 1e-12 * z.amax().max(1.0));
            prop_assert!((v * v.transpose() - DMatrix::identity(v.nrows(), v.nrows())).amax() < 1e-12);
        }
    }

    #[test]
    fn round_trips((a, _) in pair(), coords in prop::collection::vec(-8.0f64..8.0, 5), seed in any::<u64>()) {
        let x = comp(&a);
        let d = a.len();
        for basis in bases(d, seed) {
            let back = basis.ilr_inv(&basis.ilr(&x).unwrap(), 1.0).unwrap();
            for (p, q) in back.parts().iter().zip(x.parts()) {
                prop_assert!((p - q).abs() < 1e-12 * q.max(1e-3) / 1e-3);
            }
            let y = DVector::from_column_slice(&coords[..d - 1]);
            let again = basis.ilr(&basis.ilr_inv(&y, 1.0).unwrap()).unwrap();
            prop_assert!((again - &y).amax() < 1e-12 * y.amax().max(1.0) * 10.0);
        }
    }

    #[test]
    fn bases_differ_by_a_rotation((a, b) in pair(), seed in any::<u64>()) {
        let (x, y) = (comp(&a), comp(&b));
        let all = bases(a.len(), seed);
        for first in &all {
            for second in &all {
                let rotation = first.contrast() * second.contrast().transpose();
                let k = rotation.nrows();
                prop_assert!((rotation.transpose() * &rotation - DMatrix::identity(k, k)).amax() < 1e-12);
                let mapped = &rotation * second.ilr(&x).unwrap();
                prop_assert!((mapped - first.ilr(&x).unwrap()).amax() < 1e-10);
                let d1 = (first.ilr(&x).unwrap() - first.ilr(&y).unwrap()).norm();
                let d2 = (second.ilr(&x).unwrap() - second.ilr(&y).unwrap()).norm();
                prop_assert!((d1 - d2).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn closure_ignores_scale((a, _) in pair(), scale in 1e-6f64..1e6, kappa in 0.5f64..500.0) {
        let x = closure(&a, kappa).unwrap();
        let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
        let y = closure(&scaled, kappa).unwrap();
        prop_assert!((x.parts().iter().sum::<f64>() - kappa).abs() < 1e-10 * kappa);
        for (p, q) in x.parts().iter().zip(y.parts()) {
            prop_assert!((p - q).abs() < 1e-12 * kappa);
        }
        let basis = IlrBasis::helmert(a.len()).unwrap();
        let unit = closure(&a, 1.0).unwrap();
        prop_assert!((basis.ilr(&x).unwrap() - basis.ilr(&unit).unwrap()).amax() < 1e-10);
    }

    #[test]
    fn zero_replacement_stays_finite(
        values in prop::collection::vec(prop_oneof![Just(0.0), 1e-3f64..1e3], 3..7),
        exponent in -12i32..-1,
    ) {
        prop_assume!(values.iter().any(|v| *v > 0.0));
        let delta = 10f64.powi(exponent);
        let (x, replaced) = closure_with_policy(&values, 1.0, ZeroPolicy::Replace { delta }).unwrap();
        prop_assert_eq!(replaced, values.iter().filter(|v| **v == 0.0).count());
        let basis = IlrBasis::helmert(values.len()).unwrap();
        prop_assert!(basis.ilr(&x).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rook_edges_and_standardisation(side in 2usize..12) {
        let w = rook_grid(side).unwrap();
        prop_assert_eq!(w.nnz(), 4 * side * (side - 1));
        prop_assert!(w.is_symmetric());
        let standard = w.row_standardize();
        prop_assert!((standard.norm_inf() - 1.0).abs() < 1e-15);
        for s in standard.row_sums() {
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn graph_builders_are_symmetric_and_binary(
        points in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 2..30),
        radius in 0.5f64..5.0,
        seed in any::<u64>(),
    ) {
        let n = points.len();
        let w = distance_cutoff(&points, radius).unwrap();
        prop_assert!(w.is_symmetric());
        prop_assert!(w.triplets().iter().all(|&(_, _, v)| v == 1.0));
        for s in w.row_standardize().row_sums() {
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-14);
        }
        let mut r = rng(seed);
        let pairs: Vec<(usize, usize)> = (0..n).map(|_| (r.random_range(0..n), r.random_range(0..n))).filter(|(i, j)| i != j).collect();
        let adjacency = from_adjacency(n, &pairs).unwrap();
        prop_assert!(adjacency.is_symmetric());
        prop_assert!(adjacency.triplets().iter().all(|&(_, _, v)| v == 1.0));
    }

    #[test]
    fn kronecker_duality(n in 1usize..=16, p in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n);
        let y = common::random_matrix(&mut r, n, p, 2.0);
        let psi = common::random_matrix(&mut r, p, p, 1.0);
        let lhs = vec_cols(&(w.mul_mat(&y) * &psi));
        let rhs = kron(&psi.transpose(), &w.to_dense()) * vec_cols(&y);
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn filter_solve_inverts_apply(n in 1usize..=20, p in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n);
        let psi = random_stable_psi(&mut r, p, &w);
        let y = common::random_matrix(&mut r, n, p, 3.0);
        let filter = SpatialFilter::new(psi, &w).unwrap();
        let back = filter.solve(&filter.apply(&y).unwrap()).unwrap();
        prop_assert!((back - &y).amax() < 1e-10);
    }

    #[test]
    fn log_det_matches_dense_for_one_component(n in 2usize..=25, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n);
        let psi = random_stable_psi(&mut r, 1, &w);
        let exact = common::dense_s(&psi, &w).determinant().abs().ln();
        let filter = SpatialFilter::new(psi.clone(), &w).unwrap();
        let spectral = filter.log_det().unwrap();
        prop_assert!((spectral - exact).abs() <= 1e-9 * exact.abs().max(1e-3));
        prop_assert!((log_det_dense(&psi, &w).unwrap() - exact).abs() <= 1e-9 * exact.abs().max(1e-3));
    }

    #[test]
    fn stability_is_monotone_under_shrinking(n in 2usize..=16, p in 1usize..=3, c in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n);
        let psi = common::random_matrix(&mut r, p, p, 1.2);
        if stability_check(&psi, &w, 0.0).stable {
            prop_assert!(stability_check(&(&psi * c), &w, 0.0).stable);
        }
    }
}

fn noiseless(params: &ModelParams, side: usize, horizon: usize, seed: u64) -> (cosmar::PanelData, SpatialWeights) {
    let mut params = params.clone();
    params.sigma2 = 0.0;
    let w = rook_grid(side).unwrap().row_standardize();
    let mut cfg = SimConfig::new(params, horizon, seed);
    cfg.burn_in = 0;
    (simulate(&cfg, &w).unwrap(), w)
}

#[test]
fn residuals_vanish_only_at_the_generating_parameters() {
    let truth = common::stationary_design();
    let (data, w) = noiseless(&truth, 4, 12, 5);
    let at_truth = residuals(&truth, &data, &w).unwrap();
    assert!(at_truth.iter().all(|e| e.amax() < 1e-10));
    let mut r = rng(6);
    for _ in 0..20 {
        let mut perturbed = truth.clone();
        let which = r.random_range(0..3);
        let target = match which {
            0 => &mut perturbed.b,
            1 => &mut perturbed.psi,
            _ => &mut perturbed.pi,
        };
        let (i, j) = (r.random_range(0..target.nrows()), r.random_range(0..target.ncols()));
        target[(i, j)] += if r.random_bool(0.5) { 1e-3 } else { -1e-3 };
        let e = residuals(&perturbed, &data, &w).unwrap();
        assert!(e.iter().map(|m| m.norm_squared()).sum::<f64>() > 1e-12);
    }
}

#[test]
fn simulated_variance_matches_noise_variance() {
    let params = ModelParams::new(DMatrix::zeros(0, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), 2.5).unwrap();
    let w = rook_grid(5).unwrap().row_standardize();
    let mut cfg = SimConfig::new(params, 400, 11);
    cfg.regressors = RegressorSpec { intercept: false, standard_normal: 0 };
    let data = simulate(&cfg, &w).unwrap();
    let values: Vec<f64> = data.y.iter().flat_map(|m| m.iter().copied()).collect();
    let count = values.len() as f64;
    assert!(count >= 1e4);
    let mean = values.iter().sum::<f64>() / count;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    // Var(s^2) = 2 sigma^4 / (N - 1) for Gaussian data
    let se = (2.0 * 2.5f64.powi(2) / (count - 1.0)).sqrt();
    assert!((variance - 2.5).abs() < 3.0 * se, "variance {variance}, se {se}");
}

#[test]
fn lag_one_autocorrelation_tracks_temporal_coefficient() {
    for pi in [0.3, -0.5, 0.8] {
        let params = ModelParams::new(DMatrix::zeros(0, 1), DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, pi), 1.0).unwrap();
        let w = SpatialWeights::zeros(1);
        let mut cfg = SimConfig::new(params, 10_000, 21);
        cfg.regressors = RegressorSpec { intercept: false, standard_normal: 0 };
        let data = simulate(&cfg, &w).unwrap();
        let series: Vec<f64> = data.y.iter().map(|m| m[(0, 0)]).collect();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
        let lag: f64 = centered.windows(2).map(|w| w[0] * w[1]).sum();
        let var: f64 = centered.iter().map(|v| v * v).sum();
        assert!((lag / var - pi).abs() < 0.05, "pi {pi}: autocorrelation {}", lag / var);
    }
}

#[test]
fn burn_in_length_does_not_shift_moments() {
    let w = rook_grid(5).unwrap().row_standardize();
    let moments = |burn_in: usize| {
        let (mut mean, mut second) = (0.0, 0.0);
        let reps = 40;
        for r in 0..reps {
            let mut cfg = SimConfig::new(common::stationary_design(), 20, 31);
            cfg.stream = r;
            cfg.burn_in = burn_in;
            let data = simulate(&cfg, &w).unwrap();
            let count = (data.t() * data.n() * 2) as f64;
            mean += data.y.iter().map(|m| m.sum()).sum::<f64>() / count;
            second += data.y.iter().map(|m| m.norm_squared()).sum::<f64>() / count;
        }
        (mean / reps as f64, second / reps as f64)
    };
    let (m1, s1) = moments(100);
    let (m2, s2) = moments(200);
    assert!((m1 - m2).abs() < 0.05 * m1.abs().max(1.0), "means {m1} vs {m2}");
    assert!((s1 - s2).abs() < 0.05 * s1, "second moments {s1} vs {s2}");
}

#[test]
fn fitted_psi_is_always_stable() {
    let mut r = rng(41);
    for k in 0..12 {
        let n = r.random_range(4..=16);
        let w = random_weights(&mut r, n);
        let periods = r.random_range(5..=15);
        let data = random_panel(&mut r, n, 2, periods, 2);
        let opts = FitOptions { std_errors: false, max_iterations: 80, ..FitOptions::default() };
        if let Ok(result) = fit(&data, &w, &opts) {
            assert!(stability_check(&result.params.psi, &w, 0.0).stable, "instance {k}");
        }
    }
}

#[test]
fn numeric_gradient_is_stencil_independent() {
    let mut r = rng(51);
    let w = rook_grid(4).unwrap().row_standardize();
    let truth = common::stationary_design();
    let mut cfg = SimConfig::new(truth.clone(), 15, 52);
    cfg.burn_in = 50;
    let data = simulate_with_innovations(&cfg, &w).unwrap().data;
    for _ in 0..10 {
        let mut point = truth.clone();
        point.psi += common::random_matrix(&mut r, 2, 2, 0.05);
        point.pi += common::random_matrix(&mut r, 2, 2, 0.05);
        point.sigma2 = r.random_range(0.7..1.4);
        let flat: Vec<f64> = point.psi.iter().chain(point.pi.iter()).copied().collect();
        let eval = |v: &[f64]| {
            let mut p = point.clone();
            p.psi.copy_from_slice(&v[..4]);
            p.pi.copy_from_slice(&v[4..]);
            loglik(&p, &data, &w).unwrap()
        };
        for k in 0..flat.len() {
            let central = |h: f64| {
                let (mut up, mut down) = (flat.clone(), flat.clone());
                up[k] += h;
                down[k] -= h;
                (eval(&up) - eval(&down)) / (2.0 * h)
            };
            let (g1, g2) = (central(1e-5), central(5e-6));
            assert!((g1 - g2).abs() <= 1e-4 * g1.abs().max(1.0), "coordinate {k}: {g1} vs {g2}");
        }
    }
}

#[test]
fn concentrated_profile_equals_full_likelihood() {
    let mut r = rng(61);
    let w = rook_grid(4).unwrap().row_standardize();
    let data = random_panel(&mut r, 16, 2, 10, 2);
    for _ in 0..10 {
        let psi = random_stable_psi(&mut r, 2, &w);
        let (profile, implied) = concentrated_loglik(&psi, &data, &w).unwrap();
        let full = loglik(&implied, &data, &w).unwrap();
        assert!((profile - full).abs() < 1e-9 * full.abs().max(1.0), "{profile} vs {full}");
    }
}
