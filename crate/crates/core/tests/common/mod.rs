#![allow(dead_code)]

use cosmar::model::{eigenvalues, ModelParams, PanelData};
use cosmar::weights::SpatialWeights;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    cosmar::simulate::stream_rng(seed, 0xacce)
}

/// Study design with the temporal matrix halved, which makes the process
/// stationary on a row-standardised grid.
pub fn stationary_design() -> ModelParams {
    let mut p = ModelParams::simulation_design();
    p.pi *= 0.5;
    p
}

pub fn random_matrix(rng: &mut ChaCha20Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Random row-standardised weights on top of a ring; about a third of the instances are
/// symmetric binary graphs, the rest directed with random positive weights.
pub fn random_weights(rng: &mut ChaCha20Rng, n: usize) -> SpatialWeights {
    let symmetric = rng.random_bool(0.35);
    // a ring keeps every row nonempty and the spectrum away from zero
    let mut triplets: Vec<(usize, usize, f64)> = if n > 1 { (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect() } else { Vec::new() };
    if symmetric && n > 1 {
        triplets.extend((0..n).map(|i| ((i + 1) % n, i, 1.0)));
    }
    for i in 0..n {
        for j in 0..n {
            if i == j || (symmetric && j < i) {
                continue;
            }
            if rng.random_bool(0.35) {
                if symmetric {
                    triplets.push((i, j, 1.0));
                    triplets.push((j, i, 1.0));
                } else {
                    triplets.push((i, j, rng.random_range(0.5..1.5)));
                }
            }
        }
    }
    SpatialWeights::from_triplets(n, &triplets).unwrap().row_standardize()
}

fn radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Random `Ψ` whose product radius with `w` is below 0.9.
pub fn random_stable_psi(rng: &mut ChaCha20Rng, p: usize, w: &SpatialWeights) -> DMatrix<f64> {
    let psi = random_matrix(rng, p, p, 1.0);
    let w_radius = radius(&w.to_dense()).max(1e-12);
    let target = rng.random_range(0.05..0.9);
    let r = radius(&psi).max(1e-12);
    psi * (target / (r * w_radius))
}

/// Plain Kronecker product, written out for the oracles.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

pub fn vec_cols(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

/// Dense `S = I - Ψ^T ⊗ W`.
pub fn dense_s(psi: &DMatrix<f64>, w: &SpatialWeights) -> DMatrix<f64> {
    let np = psi.nrows() * w.n();
    DMatrix::identity(np, np) - kron(&psi.transpose(), &w.to_dense())
}

/// Vec-form residuals `S vec(Y_t) - Σ_i (diag(β_i) ⊗ I) vec(X_i) - (Π^T ⊗ I) vec(Y_{t-1})`.
pub fn dense_residuals(params: &ModelParams, data: &PanelData, w: &SpatialWeights) -> Vec<DVector<f64>> {
    let n = data.n();
    let s = dense_s(&params.psi, w);
    let lag_op = kron(&params.pi.transpose(), &DMatrix::identity(n, n));
    (0..data.t())
        .map(|t| {
            let mut e = &s * vec_cols(&data.y[t]) - &lag_op * vec_cols(data.lag(t));
            for (i, x) in data.x[t].iter().enumerate() {
                let scale = DMatrix::from_diagonal(&params.b.row(i).transpose());
                e -= kron(&scale, &DMatrix::identity(n, n)) * vec_cols(x);
            }
            e
        })
        .collect()
}

/// Vec-form Gaussian log-likelihood with a dense determinant.
pub fn dense_loglik(params: &ModelParams, data: &PanelData, w: &SpatialWeights) -> f64 {
    let s = dense_s(&params.psi, w);
    let log_det = s.determinant().abs().ln();
    let rss: f64 = dense_residuals(params, data, w).iter().map(|e| e.norm_squared()).sum();
    let big_n = (data.t() * data.n() * data.p()) as f64;
    -0.5 * big_n * (2.0 * std::f64::consts::PI * params.sigma2).ln() + data.t() as f64 * log_det - rss / (2.0 * params.sigma2)
}

/// A panel with random responses and regressors (not simulated from the model).
pub fn random_panel(rng: &mut ChaCha20Rng, n: usize, p: usize, q: usize, periods: usize) -> PanelData {
    let y0 = random_matrix(rng, n, p, 2.0);
    let y = (0..periods).map(|_| random_matrix(rng, n, p, 2.0)).collect();
    let x = (0..periods).map(|_| (0..q).map(|_| random_matrix(rng, n, p, 1.0)).collect()).collect();
    PanelData::new(y0, y, x, (0..q).map(|i| format!("x{i}")).collect()).unwrap()
}
