//! Quasi-maximum-likelihood estimation.
//!
//! The Gaussian log-likelihood conditional on `Y_0` is
//!
//! ```text
//! -(N/2) log(2π σ²) + T log|S(Ψ)| - (1/2σ²) Σ_t ||E_t||²,   N = T n p
//! ```
//!
//! For fixed `Ψ` the filtered response `Y_t - W Y_t Ψ` is linear in `(B, Π)`,
//! so those and `σ²` have closed-form maximisers and only the `p²` entries
//! of `Ψ` are searched numerically. Each of the `p` response columns is its
//! own least-squares problem; its QR factor is computed once per data set,
//! after which a profile evaluation costs `O(p³)` plus the log-determinant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eigenvalues, log_det_dense, log_det_from_eigs, regression_term, stability_check, ModelParams, PanelData};
use crate::optim::{self, Settings};
use crate::weights::SpatialWeights;

/// Position of every scalar parameter in
/// `θ = (vec(B), vec(Ψ), vec(Π), σ)` (column-major `vec`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub q: usize,
    pub p: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.q * self.p + 2 * self.p * self.p + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn beta(&self, i: usize, j: usize) -> usize {
        i + j * self.q
    }

    pub fn psi(&self, j: usize, k: usize) -> usize {
        self.q * self.p + j + k * self.p
    }

    pub fn pi(&self, j: usize, k: usize) -> usize {
        self.q * self.p + self.p * self.p + j + k * self.p
    }

    pub fn sigma(&self) -> usize {
        self.q * self.p + 2 * self.p * self.p
    }

    /// Packs parameters, reporting `σ = sqrt(σ²)`.
    pub fn pack(&self, params: &ModelParams) -> DVector<f64> {
        let mut v = DVector::zeros(self.len());
        for j in 0..self.p {
            for i in 0..self.q {
                v[self.beta(i, j)] = params.b[(i, j)];
            }
            for k in 0..self.p {
                v[self.psi(k, j)] = params.psi[(k, j)];
                v[self.pi(k, j)] = params.pi[(k, j)];
            }
        }
        v[self.sigma()] = params.sigma2.sqrt();
        v
    }

    pub fn unpack(&self, v: &DVector<f64>) -> ModelParams {
        let (q, p) = (self.q, self.p);
        ModelParams {
            b: DMatrix::from_fn(q, p, |i, j| v[self.beta(i, j)]),
            psi: DMatrix::from_fn(p, p, |j, k| v[self.psi(j, k)]),
            pi: DMatrix::from_fn(p, p, |j, k| v[self.pi(j, k)]),
            sigma2: v[self.sigma()] * v[self.sigma()],
        }
    }

    /// Which entries are pinned at zero under `r`.
    pub fn fixed_mask(&self, r: &Restrictions) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for j in 0..self.p {
            for k in 0..self.p {
                mask[self.psi(j, k)] = r.psi_zero;
                mask[self.pi(j, k)] = r.pi_zero;
            }
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restrictions {
    pub psi_zero: bool,
    pub pi_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    QuasiNewtonNumericGradient,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Max-norm tolerance on the gradient of the per-observation objective.
    pub gradient_tolerance: f64,
    pub stability_margin: f64,
    /// Relative central-difference step for the Hessian.
    pub hessian_step: f64,
    pub optimizer: Optimizer,
    pub concentrate: bool,
    pub restrictions: Restrictions,
    /// Skip the Hessian when only point estimates are needed.
    pub std_errors: bool,
    /// Starting `Ψ`; zero when absent. Shrunk toward zero until stable.
    pub initial_psi: Option<DMatrix<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-7,
            stability_margin: 1e-4,
            hessian_step: 1e-4,
            optimizer: Optimizer::QuasiNewtonNumericGradient,
            concentrate: true,
            restrictions: Restrictions::default(),
            std_errors: true,
            initial_psi: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub layout: ParamLayout,
    pub regressor_names: Vec<String>,
    pub loglik: f64,
    /// Packed estimates aligned with [`ParamLayout`] (last entry is `σ`).
    pub estimates: DVector<f64>,
    /// `None` for restricted entries and undefined variances.
    pub std_errors: Vec<Option<f64>>,
    pub t_stats: Vec<Option<f64>>,
    /// Full `θ` covariance; rows and columns of restricted entries are NaN.
    pub vcov: Option<DMatrix<f64>>,
    pub fixed: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

/// `W Y_t` for every period; constant across likelihood evaluations.
fn spatial_lags(data: &PanelData, w: &SpatialWeights) -> Vec<DMatrix<f64>> {
    data.y.iter().map(|y| w.mul_mat(y)).collect()
}

fn check_inputs(data: &PanelData, w: &SpatialWeights) -> Result<()> {
    data.validate()?;
    if w.n() != data.n() {
        return Err(Error::ShapeMismatch(format!("weights have {} units, panel has {}", w.n(), data.n())));
    }
    Ok(())
}

fn log_det(psi: &DMatrix<f64>, w: &SpatialWeights) -> Result<f64> {
    let value = match w.spectrum() {
        Some(nu) => log_det_from_eigs(&eigenvalues(psi), nu),
        None => log_det_dense(psi, w)?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLogDet)
    }
}

fn rss_with(params: &ModelParams, data: &PanelData, wy: &[DMatrix<f64>]) -> f64 {
    let (n, p) = (data.n(), data.p());
    (0..data.t())
        .map(|t| {
            let e = &data.y[t] - regression_term(&data.x[t], &params.b, n, p) - &wy[t] * &params.psi - data.lag(t) * &params.pi;
            e.norm_squared()
        })
        .sum()
}

fn gaussian_loglik(n_obs: f64, periods: f64, sigma2: f64, log_det: f64, rss: f64) -> f64 {
    -0.5 * n_obs * (2.0 * std::f64::consts::PI * sigma2).ln() + periods * log_det - rss / (2.0 * sigma2)
}

/// Gaussian conditional log-likelihood of the panel given `Y_0`.
pub fn loglik(params: &ModelParams, data: &PanelData, w: &SpatialWeights) -> Result<f64> {
    check_inputs(data, w)?;
    let wy = spatial_lags(data, w);
    loglik_with(params, data, w, &wy)
}

fn loglik_with(params: &ModelParams, data: &PanelData, w: &SpatialWeights, wy: &[DMatrix<f64>]) -> Result<f64> {
    if params.p() != data.p() || params.q() != data.q() {
        return Err(Error::ShapeMismatch(format!(
            "params are (q={}, p={}), panel is (q={}, p={})",
            params.q(),
            params.p(),
            data.q(),
            data.p()
        )));
    }
    if params.sigma2.is_nan() || params.sigma2 <= 0.0 {
        return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {}", params.sigma2)));
    }
    let report = stability_check(&params.psi, w, 0.0);
    if !report.stable {
        return Err(Error::Unstable { radius: report.spectral_radius, bound: 1.0 });
    }
    let n_obs = (data.t() * data.n() * data.p()) as f64;
    let value = gaussian_loglik(n_obs, data.t() as f64, params.sigma2, log_det(&params.psi, w)?, rss_with(params, data, wy));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite("log-likelihood".into()))
    }
}

/// The log-likelihood exactly as printed alongside the model, with its
/// `(D-1)` factors. Diagnostic only; the estimator never maximises it.
pub fn printed_form_loglik(params: &ModelParams, data: &PanelData, w: &SpatialWeights) -> Result<f64> {
    check_inputs(data, w)?;
    let wy = spatial_lags(data, w);
    let (t, n, p) = (data.t() as f64, data.n() as f64, data.p() as f64);
    let rss = rss_with(params, data, &wy);
    let ld = log_det(&params.psi, w)?;
    Ok(-(t * n * p / 2.0) * (2.0 * std::f64::consts::PI).ln() + t * n * params.sigma2.ln() / (2.0 * p) + t / p * ld
        - rss / (2.0 * p * params.sigma2))
}

/// Triangular factor of one response column's least-squares problem.
#[derive(Debug, Clone)]
struct ColumnSystem {
    /// Upper-left block for the `(B, Π)` coefficients.
    r11: DMatrix<f64>,
    r12: DMatrix<f64>,
    r22: DMatrix<f64>,
}

/// Profile likelihood over `Ψ`.
#[derive(Debug)]
pub struct Concentrated<'a> {
    data: &'a PanelData,
    w: &'a SpatialWeights,
    restrictions: Restrictions,
    columns: Vec<ColumnSystem>,
    n_obs: f64,
}

#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub loglik: f64,
    pub params: ModelParams,
    pub rss: f64,
}

impl<'a> Concentrated<'a> {
    pub fn new(data: &'a PanelData, w: &'a SpatialWeights, restrictions: Restrictions) -> Result<Self> {
        check_inputs(data, w)?;
        let (n, p, q, periods) = (data.n(), data.p(), data.q(), data.t());
        let rows = n * periods;
        let kz = q + if restrictions.pi_zero { 0 } else { p };
        let ka = 1 + if restrictions.psi_zero { 0 } else { p };
        if rows < kz + ka {
            return Err(Error::SingularDesign(format!("{rows} observations per component for {} unknowns", kz + ka)));
        }
        let wy = spatial_lags(data, w);
        let mut columns = Vec::with_capacity(p);
        for j in 0..p {
            let mut m = DMatrix::zeros(rows, kz + ka);
            for (t, lagged) in wy.iter().enumerate().take(periods) {
                let r0 = t * n;
                for i in 0..q {
                    m.view_mut((r0, i), (n, 1)).copy_from(&data.x[t][i].column(j));
                }
                if !restrictions.pi_zero {
                    m.view_mut((r0, q), (n, p)).copy_from(data.lag(t));
                }
                m.view_mut((r0, kz), (n, 1)).copy_from(&data.y[t].column(j));
                if !restrictions.psi_zero {
                    m.view_mut((r0, kz + 1), (n, p)).copy_from(lagged);
                }
            }
            let norms: Vec<f64> = (0..kz).map(|i| m.column(i).norm()).collect();
            let r = m.qr().r();
            let r11 = r.view((0, 0), (kz, kz)).into_owned();
            // scale-free rank test: a column is degenerate when little of it
            // survives projection on the preceding ones
            if let Some(i) = (0..kz).find(|&i| r11[(i, i)].is_nan() || r11[(i, i)].abs() <= 1e-10 * norms[i]) {
                return Err(Error::SingularDesign(format!("regressor column {i} is collinear for component {}", j + 1)));
            }
            columns.push(ColumnSystem {
                r11,
                r12: r.view((0, kz), (kz, ka)).into_owned(),
                r22: r.view((kz, kz), (ka, ka)).into_owned(),
            });
        }
        Ok(Self { data, w, restrictions, columns, n_obs: (rows * p) as f64 })
    }

    pub fn n_obs(&self) -> f64 {
        self.n_obs
    }

    /// Profiled log-likelihood at `Ψ` together with `B̂(Ψ)`, `Π̂(Ψ)`, `σ̂²(Ψ)`.
    pub fn evaluate(&self, psi: &DMatrix<f64>) -> Result<ProfilePoint> {
        let (p, q) = (self.data.p(), self.data.q());
        if psi.shape() != (p, p) {
            return Err(Error::ShapeMismatch(format!("psi must be {p}x{p}")));
        }
        if self.restrictions.psi_zero && psi.amax() != 0.0 {
            return Err(Error::InvalidConfig("psi is restricted to zero".into()));
        }
        let report = stability_check(psi, self.w, 0.0);
        if !report.stable {
            return Err(Error::Unstable { radius: report.spectral_radius, bound: 1.0 });
        }
        let mut b = DMatrix::zeros(q, p);
        let mut pi = DMatrix::zeros(p, p);
        let mut rss = 0.0;
        for (j, col) in self.columns.iter().enumerate() {
            let mut c = DVector::from_element(col.r22.ncols(), 1.0);
            if !self.restrictions.psi_zero {
                for k in 0..p {
                    c[1 + k] = -psi[(k, j)];
                }
            }
            rss += (&col.r22 * &c).norm_squared();
            if col.r11.nrows() > 0 {
                let coef = col
                    .r11
                    .solve_upper_triangular(&(&col.r12 * &c))
                    .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
                for i in 0..q {
                    b[(i, j)] = coef[i];
                }
                if !self.restrictions.pi_zero {
                    for k in 0..p {
                        pi[(k, j)] = coef[q + k];
                    }
                }
            }
        }
        let sigma2 = (rss / self.n_obs).max(f64::MIN_POSITIVE);
        let ld = if self.restrictions.psi_zero { 0.0 } else { log_det(psi, self.w)? };
        let loglik = gaussian_loglik(self.n_obs, self.data.t() as f64, sigma2, ld, rss.max(0.0));
        Ok(ProfilePoint { loglik, params: ModelParams { b, psi: psi.clone(), pi, sigma2 }, rss })
    }
}

/// Profile log-likelihood at `Ψ` and the implied `(B, Π, σ²)`.
pub fn concentrated_loglik(psi: &DMatrix<f64>, data: &PanelData, w: &SpatialWeights) -> Result<(f64, ModelParams)> {
    let prof = Concentrated::new(data, w, Restrictions::default())?.evaluate(psi)?;
    Ok((prof.loglik, prof.params))
}

fn starting_psi(opts: &FitOptions, p: usize, w: &SpatialWeights) -> Result<DMatrix<f64>> {
    if opts.restrictions.psi_zero {
        return Ok(DMatrix::zeros(p, p));
    }
    let mut psi = match &opts.initial_psi {
        Some(m) if m.shape() == (p, p) => m.clone(),
        Some(m) => return Err(Error::ShapeMismatch(format!("initial psi is {:?}, expected ({p}, {p})", m.shape()))),
        None => DMatrix::zeros(p, p),
    };
    while !stability_check(&psi, w, opts.stability_margin).stable {
        psi *= 0.5;
        if psi.amax() < 1e-12 {
            psi.fill(0.0);
        }
    }
    Ok(psi)
}

fn settings(opts: &FitOptions) -> Settings {
    Settings { max_iterations: opts.max_iterations, gradient_tolerance: opts.gradient_tolerance, gradient_step: 1e-6 }
}

fn minimize<F: Fn(&DVector<f64>) -> f64>(f: &F, x0: DVector<f64>, opts: &FitOptions) -> optim::Minimum {
    match opts.optimizer {
        Optimizer::QuasiNewtonNumericGradient => optim::bfgs(f, x0, &settings(opts)),
        Optimizer::NelderMead => optim::nelder_mead(f, x0, &settings(opts)),
    }
}

/// Maximises the log-likelihood over the stable region of `Ψ`.
pub fn fit(data: &PanelData, w: &SpatialWeights, opts: &FitOptions) -> Result<FitResult> {
    if !(opts.gradient_tolerance > 0.0 && opts.hessian_step > 0.0 && opts.stability_margin >= 0.0) {
        return Err(Error::InvalidConfig("tolerances must be positive".into()));
    }
    let profile = Concentrated::new(data, w, opts.restrictions)?;
    let (p, q) = (data.p(), data.q());
    let layout = ParamLayout { q, p };
    let psi0 = starting_psi(opts, p, w)?;
    let n_obs = profile.n_obs();
    let margin = opts.stability_margin;
    let mut warnings = Vec::new();

    let (point, minimum) = if opts.concentrate {
        let objective = |x: &DVector<f64>| {
            let psi = DMatrix::from_column_slice(p, p, x.as_slice());
            if !stability_check(&psi, w, margin).stable {
                return f64::INFINITY;
            }
            profile.evaluate(&psi).map_or(f64::INFINITY, |pt| -pt.loglik / n_obs)
        };
        let x0 = if opts.restrictions.psi_zero { DVector::zeros(0) } else { DVector::from_column_slice(psi0.as_slice()) };
        let min = if opts.restrictions.psi_zero {
            optim::Minimum { x: x0, value: 0.0, gradient_norm: 0.0, iterations: 0, converged: true }
        } else {
            minimize(&objective, x0, opts)
        };
        let psi = if opts.restrictions.psi_zero { DMatrix::zeros(p, p) } else { DMatrix::from_column_slice(p, p, min.x.as_slice()) };
        (profile.evaluate(&psi)?, min)
    } else {
        let start = profile.evaluate(&psi0)?;
        let fixed = layout.fixed_mask(&opts.restrictions);
        let free: Vec<usize> = (0..layout.len()).filter(|&k| !fixed[k]).collect();
        let wy = spatial_lags(data, w);
        let mut packed = layout.pack(&start.params);
        let s = layout.sigma();
        packed[s] = start.params.sigma2.ln();
        let to_params = |x: &DVector<f64>| {
            let mut v = DVector::zeros(layout.len());
            for (slot, &k) in free.iter().enumerate() {
                v[k] = x[slot];
            }
            v[s] = (0.5 * v[s]).exp();
            layout.unpack(&v)
        };
        let objective = |x: &DVector<f64>| {
            let params = to_params(x);
            if !stability_check(&params.psi, w, margin).stable {
                return f64::INFINITY;
            }
            loglik_with(&params, data, w, &wy).map_or(f64::INFINITY, |v| -v / n_obs)
        };
        let x0 = DVector::from_iterator(free.len(), free.iter().map(|&k| packed[k]));
        let min = minimize(&objective, x0, opts);
        let params = to_params(&min.x);
        let ll = loglik_with(&params, data, w, &wy)?;
        let rss = rss_with(&params, data, &wy);
        (ProfilePoint { loglik: ll, params, rss }, min)
    };

    let scale = data.y.iter().map(|y| y.norm_squared()).sum::<f64>() / n_obs;
    let exact = point.rss <= 1e-20 * scale.max(f64::MIN_POSITIVE) * n_obs;
    let converged = minimum.converged || exact;
    if exact && !minimum.converged {
        warnings.push("residuals vanish at the optimum; likelihood is unbounded there".into());
    } else if !converged {
        warnings.push(format!("optimizer stopped after {} iterations with gradient norm {:.3e}", minimum.iterations, minimum.gradient_norm));
    }
    if !stability_check(&point.params.psi, w, 0.0).stable {
        return Err(Error::Unstable { radius: stability_check(&point.params.psi, w, 0.0).spectral_radius, bound: 1.0 });
    }

    let estimates = layout.pack(&point.params);
    let fixed = layout.fixed_mask(&opts.restrictions);
    let mut result = FitResult {
        params: point.params,
        layout,
        regressor_names: data.regressor_names.clone(),
        loglik: point.loglik,
        estimates,
        std_errors: vec![None; layout.len()],
        t_stats: vec![None; layout.len()],
        vcov: None,
        fixed,
        converged,
        iterations: minimum.iterations,
        gradient_norm: minimum.gradient_norm,
        warnings,
    };
    if opts.std_errors {
        if exact {
            result.warnings.push("standard errors undefined for a zero-variance fit".into());
        } else {
            let report = standard_errors(&result.params, data, w, &opts.restrictions, opts.hessian_step)?;
            result.std_errors = report.std_errors;
            result.vcov = Some(report.vcov);
            result.warnings.extend(report.warnings);
            result.t_stats = result
                .estimates
                .iter()
                .zip(&result.std_errors)
                .map(|(est, se)| se.filter(|s| *s > 0.0).map(|s| est / s))
                .collect();
        }
    }
    for w in &result.warnings {
        log::warn!("{w}");
    }
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct StdErrorReport {
    pub hessian: DMatrix<f64>,
    pub vcov: DMatrix<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Observed-information standard errors: `vcov = -H^{-1}` with `H` the
/// central-difference Hessian of the log-likelihood in
/// `(vec(B), vec(Ψ), vec(Π), σ)` at `params`, restricted entries excluded.
pub fn standard_errors(
    params: &ModelParams,
    data: &PanelData,
    w: &SpatialWeights,
    restrictions: &Restrictions,
    step: f64,
) -> Result<StdErrorReport> {
    check_inputs(data, w)?;
    let layout = ParamLayout { q: data.q(), p: data.p() };
    let fixed = layout.fixed_mask(restrictions);
    let free: Vec<usize> = (0..layout.len()).filter(|&k| !fixed[k]).collect();
    let base = layout.pack(params);
    let wy = spatial_lags(data, w);
    let f = |x: &DVector<f64>| {
        let mut v = base.clone();
        for (slot, &k) in free.iter().enumerate() {
            v[k] = x[slot];
        }
        loglik_with(&layout.unpack(&v), data, w, &wy).unwrap_or(f64::NAN)
    };
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|&k| base[k]));
    let hessian = optim::hessian(&f, &x0, step);
    if hessian.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian (a step left the stable region)".into()));
    }
    let info = -&hessian;
    let mut warnings = Vec::new();
    let inv = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            let svd = info.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 1e-12 * smax {
                warnings.push("Hessian is singular; using the pseudo-inverse".into());
                svd.pseudo_inverse(1e-12 * smax).map_err(|e| Error::SolveFailed(e.to_string()))?
            } else {
                warnings.push("Hessian is not negative definite at the estimate".into());
                info.clone().try_inverse().ok_or_else(|| Error::SolveFailed("Hessian inversion failed".into()))?
            }
        }
    };
    let k = layout.len();
    let mut vcov = DMatrix::from_element(k, k, f64::NAN);
    let mut std_errors = vec![None; k];
    for (a, &ka) in free.iter().enumerate() {
        for (b, &kb) in free.iter().enumerate() {
            vcov[(ka, kb)] = inv[(a, b)];
        }
        let var = inv[(a, a)];
        if var >= 0.0 {
            std_errors[ka] = Some(var.sqrt());
        } else {
            warnings.push(format!("negative variance for parameter {ka}; standard error omitted"));
        }
    }
    Ok(StdErrorReport { hessian, vcov, std_errors, warnings })
}
