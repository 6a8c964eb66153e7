//! Model algebra for
//!
//! ```text
//! Y_t = Σ_i X_{t,i} β_i + W Y_t Ψ + Y_{t-1} Π + E_t
//! ```
//!
//! where every `Y_t`, `X_{t,i}` and `E_t` is `n x p`, and `β_i` scales
//! column `j` of `X_{t,i}` by `B[i, j]`. In vec form the spatial part is
//! `S = I_{np} - Ψ^T ⊗ W`; the code works with the matrix form `Y - W Y Ψ`
//! and never builds `S` unless a dense fallback is needed.

use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector, LU};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::weights::SpatialWeights;

pub const DEFAULT_STABILITY_MARGIN: f64 = 1e-6;

/// Above this `n * p` the spatial system is solved iteratively.
const DENSE_SOLVE_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `q x p` slopes; row `i` is `β_i`.
    pub b: DMatrix<f64>,
    /// `p x p` spatial autoregressive matrix.
    pub psi: DMatrix<f64>,
    /// `p x p` temporal autoregressive matrix.
    pub pi: DMatrix<f64>,
    pub sigma2: f64,
}

impl ModelParams {
    pub fn new(b: DMatrix<f64>, psi: DMatrix<f64>, pi: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        let p = psi.nrows();
        if p == 0 || psi.ncols() != p {
            return Err(Error::ShapeMismatch(format!("psi must be square with p >= 1, got {}x{}", psi.nrows(), psi.ncols())));
        }
        if pi.shape() != (p, p) {
            return Err(Error::ShapeMismatch(format!("pi must be {p}x{p}, got {:?}", pi.shape())));
        }
        if b.ncols() != p && b.nrows() > 0 {
            return Err(Error::ShapeMismatch(format!("B must have {p} columns, got {}", b.ncols())));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma2 must be nonnegative, got {sigma2}")));
        }
        if b.iter().chain(psi.iter()).chain(pi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        let b = if b.nrows() == 0 { DMatrix::zeros(0, p) } else { b };
        Ok(Self { b, psi, pi, sigma2 })
    }

    /// All-zero parameters with unit variance.
    pub fn zeros(q: usize, p: usize) -> Self {
        Self { b: DMatrix::zeros(q, p), psi: DMatrix::zeros(p, p), pi: DMatrix::zeros(p, p), sigma2: 1.0 }
    }

    /// Values used in the simulation design: three-part compositions
    /// (`p = 2`), an intercept and two regressors, unit noise variance.
    pub fn simulation_design() -> Self {
        Self {
            b: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -2.0, 1.0, 3.0, -2.0]),
            psi: DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.1, 0.7]),
            pi: DMatrix::from_row_slice(2, 2, &[0.1, 0.1, 0.2, 0.1]),
            sigma2: 1.0,
        }
    }

    pub fn p(&self) -> usize {
        self.psi.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.nrows()
    }
}

/// A panel in log-ratio coordinates, conditioned on `y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    /// `Y_1 .. Y_T`, each `n x p`.
    pub y: Vec<DMatrix<f64>>,
    /// `Y_0`, `n x p`.
    pub y0: DMatrix<f64>,
    /// `x[t][i]` is regressor `i` at time `t + 1`, `n x p`.
    pub x: Vec<Vec<DMatrix<f64>>>,
    /// One label per regressor; `"intercept"` marks the constant.
    pub regressor_names: Vec<String>,
}

pub const INTERCEPT: &str = "intercept";

impl PanelData {
    pub fn new(y0: DMatrix<f64>, y: Vec<DMatrix<f64>>, x: Vec<Vec<DMatrix<f64>>>, regressor_names: Vec<String>) -> Result<Self> {
        let data = Self { y, y0, x, regressor_names };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y0.nrows()
    }

    pub fn p(&self) -> usize {
        self.y0.ncols()
    }

    pub fn t(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.regressor_names.len()
    }

    /// Lagged response for period index `t` (0-based into `y`).
    pub fn lag(&self, t: usize) -> &DMatrix<f64> {
        if t == 0 {
            &self.y0
        } else {
            &self.y[t - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.y0.shape();
        if n == 0 || p == 0 {
            return Err(Error::ShapeMismatch("panel needs n >= 1 and p >= 1".into()));
        }
        if self.y.is_empty() {
            return Err(Error::ShapeMismatch("panel needs T >= 1".into()));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::ShapeMismatch(format!("{} regressor periods for {} response periods", self.x.len(), self.y.len())));
        }
        let mut bad = Vec::new();
        for (t, m) in std::iter::once(&self.y0).chain(self.y.iter()).enumerate() {
            if m.shape() != (n, p) {
                return Err(Error::ShapeMismatch(format!("Y_{t} is {:?}, expected ({n}, {p})", m.shape())));
            }
            for i in 0..n {
                if m.row(i).iter().any(|v| !v.is_finite()) {
                    bad.push(format!("(unit {i}, time {t})"));
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::NonFinite(format!("responses at {}", bad.join(", "))));
        }
        for (t, xs) in self.x.iter().enumerate() {
            if xs.len() != self.q() {
                return Err(Error::ShapeMismatch(format!("time {} has {} regressors, expected {}", t + 1, xs.len(), self.q())));
            }
            for (i, m) in xs.iter().enumerate() {
                if m.shape() != (n, p) {
                    return Err(Error::ShapeMismatch(format!("X_{{{},{}}} is {:?}", t + 1, i, m.shape())));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("regressor {i} at time {}", t + 1)));
                }
            }
        }
        Ok(())
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.p() != self.p() {
            return Err(Error::ShapeMismatch(format!("params have p = {}, panel has {}", params.p(), self.p())));
        }
        if params.q() != self.q() {
            return Err(Error::ShapeMismatch(format!("params have q = {}, panel has {}", params.q(), self.q())));
        }
        Ok(())
    }
}

/// `Σ_i X_i β_i` with `β_i` applied columnwise.
pub fn regression_term(xs: &[DMatrix<f64>], b: &DMatrix<f64>, n: usize, p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, p);
    for (i, x) in xs.iter().enumerate() {
        for j in 0..p {
            out.column_mut(j).axpy(b[(i, j)], &x.column(j), 1.0);
        }
    }
    out
}

/// Column-major vectorisation.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

/// Eigenvalues of a small square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 1 {
        return vec![Complex::new(m[(0, 0)], 0.0)];
    }
    if m.nrows() == 2 {
        // closed form avoids iterating on tiny matrices
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let half_tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        let root = Complex::new(disc, 0.0).sqrt();
        return vec![Complex::new(half_tr, 0.0) + root, Complex::new(half_tr, 0.0) - root];
    }
    match nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().copied().collect(),
        None => vec![Complex::new(f64::INFINITY, 0.0); m.nrows()],
    }
}

fn spectral_radius(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// `max |μ_i ν_j|`, the spectral radius of `Ψ^T ⊗ W`.
    pub spectral_radius: f64,
    /// Maximum absolute column sum of `Ψ`.
    pub psi_norm_one: f64,
    /// Maximum absolute row sum of `W`.
    pub w_norm_inf: f64,
    /// Whether the cheap sufficient bound `||Ψ||_1 ||W||_inf < 1` holds.
    pub norm_bound_holds: bool,
}

/// Stable iff the spectral radius of `Ψ^T ⊗ W` is below `1 - margin`.
pub fn stability_check(psi: &DMatrix<f64>, w: &SpatialWeights, margin: f64) -> StabilityReport {
    let psi_eigs = eigenvalues(psi);
    stability_from_eigs(psi, &psi_eigs, w, margin)
}

fn stability_from_eigs(psi: &DMatrix<f64>, psi_eigs: &[Complex<f64>], w: &SpatialWeights, margin: f64) -> StabilityReport {
    let psi_norm_one = (0..psi.ncols()).map(|j| psi.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let w_norm_inf = (0..w.n()).map(|i| w.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let w_radius = match w.spectrum() {
        Some(nu) => spectral_radius(nu),
        None => w_norm_inf,
    };
    let radius = spectral_radius(psi_eigs) * w_radius;
    StabilityReport {
        stable: radius.is_finite() && radius < 1.0 - margin,
        spectral_radius: radius,
        psi_norm_one,
        w_norm_inf,
        norm_bound_holds: psi_norm_one * w_norm_inf < 1.0,
    }
}

/// Spectral radius of the one-step transition `Y_{t-1} -> S^{-1}(Y_{t-1} Π)`.
///
/// Each eigenvector `v` of `W` with eigenvalue `ν` spans an invariant
/// subspace on which the transition acts as `(I - ν Ψ^T)^{-1} Π^T`, so the
/// radius is the largest spectral radius over the spectrum of `W`. Values of
/// one or more mean the panel grows without bound. `None` when the spectrum
/// of `W` is unavailable.
pub fn temporal_radius(psi: &DMatrix<f64>, pi: &DMatrix<f64>, w: &SpatialWeights) -> Option<f64> {
    let p = psi.nrows();
    let nu = w.spectrum()?;
    let psi_t = psi.transpose().map(|v| Complex::new(v, 0.0));
    let pi_t = pi.transpose().map(|v| Complex::new(v, 0.0));
    let identity = DMatrix::<Complex<f64>>::identity(p, p);
    let mut radius = 0.0f64;
    for &v in nu {
        let a = &identity - &psi_t * v;
        let m = a.lu().solve(&pi_t)?;
        let eigs = nalgebra::Schur::try_new(m, f64::EPSILON, 10_000)?.eigenvalues()?;
        radius = eigs.iter().map(|c| c.norm()).fold(radius, f64::max);
    }
    Some(radius)
}

/// The spatial filter `S = I - Ψ^T ⊗ W`, kept in factored form.
#[derive(Debug)]
pub struct SpatialFilter<'a> {
    psi: DMatrix<f64>,
    weights: &'a SpatialWeights,
    psi_eigs: Vec<Complex<f64>>,
    dense_lu: OnceLock<Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>>,
}

impl<'a> SpatialFilter<'a> {
    pub fn new(psi: DMatrix<f64>, weights: &'a SpatialWeights) -> Result<Self> {
        if psi.nrows() != psi.ncols() {
            return Err(Error::ShapeMismatch(format!("psi must be square, got {:?}", psi.shape())));
        }
        // computes and caches the spectrum of W on first use
        let _ = weights.spectrum();
        let psi_eigs = eigenvalues(&psi);
        Ok(Self { psi, weights, psi_eigs, dense_lu: OnceLock::new() })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn weights(&self) -> &SpatialWeights {
        self.weights
    }

    pub fn stability(&self, margin: f64) -> StabilityReport {
        stability_from_eigs(&self.psi, &self.psi_eigs, self.weights, margin)
    }

    fn require_stable(&self) -> Result<()> {
        let report = self.stability(DEFAULT_STABILITY_MARGIN);
        if report.stable {
            Ok(())
        } else {
            Err(Error::Unstable { radius: report.spectral_radius, bound: 1.0 - DEFAULT_STABILITY_MARGIN })
        }
    }

    fn check_shape(&self, y: &DMatrix<f64>) -> Result<()> {
        let expected = (self.weights.n(), self.psi.nrows());
        if y.shape() != expected {
            return Err(Error::ShapeMismatch(format!("expected {expected:?}, got {:?}", y.shape())));
        }
        Ok(())
    }

    /// `Y - W Y Ψ`, the matrix form of `S vec(Y)`.
    pub fn apply(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(y)?;
        Ok(y - self.weights.mul_mat(y) * &self.psi)
    }

    /// Solves `Y - W Y Ψ = R` for `Y`.
    pub fn solve(&self, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(r)?;
        self.require_stable()?;
        let (n, p) = r.shape();
        if n * p <= DENSE_SOLVE_LIMIT {
            let lu = self.dense_lu.get_or_init(|| {
                let lu = dense_filter(&self.psi, self.weights).lu();
                lu.is_invertible().then_some(lu)
            });
            let lu = lu.as_ref().ok_or_else(|| Error::SolveFailed("spatial filter is singular".into()))?;
            let x = lu.solve(&vec_of(r)).ok_or_else(|| Error::SolveFailed("LU solve failed".into()))?;
            return Ok(unvec(&x, n, p));
        }
        self.solve_iterative(r)
    }

    /// Neumann iteration `Y <- R + W Y Ψ`; contracts because the
    /// spectral radius of `Ψ^T ⊗ W` is below one.
    fn solve_iterative(&self, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let scale = r.amax().max(f64::MIN_POSITIVE);
        let mut y = r.clone();
        for _ in 0..100_000 {
            let next = r + self.weights.mul_mat(&y) * &self.psi;
            let change = (&next - &y).amax();
            y = next;
            if change <= 1e-14 * scale {
                return Ok(y);
            }
        }
        Err(Error::SolveFailed("fixed-point iteration did not converge".into()))
    }

    /// `log |I - Ψ^T ⊗ W|` as `Σ_i Σ_j log|1 - μ_i ν_j|`. Falls back to a
    /// dense LU determinant when the spectrum of `W` is unavailable.
    pub fn log_det(&self) -> Result<f64> {
        self.require_stable()?;
        let value = match self.weights.spectrum() {
            Some(nu) => log_det_from_eigs(&self.psi_eigs, nu),
            None => log_det_dense(&self.psi, self.weights)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteLogDet)
        }
    }
}

/// Inside the stability region every factor `1 - μν` has positive real
/// part, so the determinant is positive and equals the product of moduli.
pub fn log_det_from_eigs(psi_eigs: &[Complex<f64>], w_eigs: &[Complex<f64>]) -> f64 {
    let one = Complex::new(1.0, 0.0);
    let mut acc = 0.0;
    for mu in psi_eigs {
        for nu in w_eigs {
            acc += (one - mu * nu).norm().ln();
        }
    }
    acc
}

/// Dense `I - Ψ^T ⊗ W`.
pub fn dense_filter(psi: &DMatrix<f64>, w: &SpatialWeights) -> DMatrix<f64> {
    let np = w.n() * psi.nrows();
    DMatrix::identity(np, np) - psi.transpose().kronecker(&w.to_dense())
}

/// `log |det S|` from an LU factorisation of the dense filter.
pub fn log_det_dense(psi: &DMatrix<f64>, w: &SpatialWeights) -> Result<f64> {
    let lu = dense_filter(psi, w).lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return Err(Error::NonFiniteLogDet);
        }
        acc += d.abs().ln();
    }
    Ok(acc)
}

/// `E_t = Y_t - Σ_i X_{t,i} β_i - W Y_t Ψ - Y_{t-1} Π` for `t = 1..T`.
pub fn residuals(params: &ModelParams, data: &PanelData, w: &SpatialWeights) -> Result<Vec<DMatrix<f64>>> {
    data.check_params(params)?;
    if w.n() != data.n() {
        return Err(Error::ShapeMismatch(format!("weights are {}x{}, panel has {} units", w.n(), w.n(), data.n())));
    }
    let (n, p) = (data.n(), data.p());
    Ok((0..data.t())
        .map(|t| {
            let y = &data.y[t];
            let fitted = regression_term(&data.x[t], &params.b, n, p) + w.mul_mat(y) * &params.psi + data.lag(t) * &params.pi;
            y - fitted
        })
        .collect())
}
