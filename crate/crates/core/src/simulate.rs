//! Forward simulation of the spatiotemporal process in ilr coordinates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{regression_term, temporal_radius, ModelParams, PanelData, SpatialFilter, DEFAULT_STABILITY_MARGIN, INTERCEPT};
use crate::simplex::{Composition, IlrBasis};
use crate::weights::SpatialWeights;

/// Deterministic generator for stream `stream` under `seed`.
///
/// ChaCha20 is counter based: each stream id selects an independent
/// sequence, so replications can be generated in any order.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Noise {
    Gaussian,
    /// Student-t rescaled to variance `sigma2`; needs `df > 2`.
    StudentT { df: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Zeros,
    /// Zeros followed by at least [`STATIONARY_BURN_IN`] discarded periods.
    StationaryDraw,
}

pub const STATIONARY_BURN_IN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub intercept: bool,
    /// Number of regressors with i.i.d. standard normal entries.
    pub standard_normal: usize,
}

impl RegressorSpec {
    pub fn q(&self) -> usize {
        usize::from(self.intercept) + self.standard_normal
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.q());
        if self.intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend((1..=self.standard_normal).map(|i| format!("x{i}")));
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Stream id under `seed`; Monte Carlo replications use distinct streams.
    pub stream: u64,
    pub regressors: RegressorSpec,
    pub initial: InitialState,
    pub noise: Noise,
}

impl SimConfig {
    /// The simulation design with defaults: 100 burn-in periods, zero
    /// start, Gaussian noise, intercept plus two normal regressors.
    pub fn new(params: ModelParams, horizon: usize, seed: u64) -> Self {
        let standard_normal = params.q().saturating_sub(1);
        Self {
            regressors: RegressorSpec { intercept: params.q() > 0, standard_normal },
            params,
            horizon,
            burn_in: 100,
            seed,
            stream: 0,
            initial: InitialState::Zeros,
            noise: Noise::Gaussian,
        }
    }

    fn validate(&self, w: &SpatialWeights) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.regressors.q() != self.params.q() {
            return Err(Error::InvalidConfig(format!(
                "regressor spec yields q = {} but B has {} rows",
                self.regressors.q(),
                self.params.q()
            )));
        }
        if let Noise::StudentT { df } = self.noise {
            if df.is_nan() || df <= 2.0 {
                return Err(Error::InvalidConfig(format!("student-t noise needs df > 2, got {df}")));
            }
        }
        if w.n() == 0 {
            return Err(Error::InvalidConfig("weights have no units".into()));
        }
        Ok(())
    }

    fn effective_burn_in(&self) -> usize {
        match self.initial {
            InitialState::Zeros => self.burn_in,
            InitialState::StationaryDraw => self.burn_in.max(STATIONARY_BURN_IN),
        }
    }
}

/// A simulated panel with the innovations that generated it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub data: PanelData,
    /// `E_1 .. E_T`, aligned with `data.y`.
    pub innovations: Vec<DMatrix<f64>>,
}

/// Runs the recursion `Y_t = S^{-1} (Σ X_{t,i} β_i + Y_{t-1} Π + E_t)` and
/// keeps the last `horizon` periods; the period just before them is `Y_0`.
pub fn simulate(cfg: &SimConfig, w: &SpatialWeights) -> Result<PanelData> {
    simulate_with_innovations(cfg, w).map(|s| s.data)
}

pub fn simulate_with_innovations(cfg: &SimConfig, w: &SpatialWeights) -> Result<Simulation> {
    cfg.validate(w)?;
    let params = &cfg.params;
    let (n, p) = (w.n(), params.p());
    let filter = SpatialFilter::new(params.psi.clone(), w)?;
    let report = filter.stability(DEFAULT_STABILITY_MARGIN);
    if !report.stable {
        return Err(Error::Unstable { radius: report.spectral_radius, bound: 1.0 - DEFAULT_STABILITY_MARGIN });
    }
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let sd = params.sigma2.sqrt();
    let t_scale = match cfg.noise {
        Noise::StudentT { df } => ((df - 2.0) / df).sqrt(),
        Noise::Gaussian => 1.0,
    };
    let student = match cfg.noise {
        Noise::StudentT { df } => Some(StudentT::new(df).map_err(|e| Error::InvalidConfig(e.to_string()))?),
        Noise::Gaussian => None,
    };

    if let Some(r) = temporal_radius(&params.psi, &params.pi, w) {
        if r >= 1.0 {
            log::warn!("temporal dynamics are explosive (transition radius {r:.4}); panel magnitudes grow geometrically");
        }
    }
    let burn_in = cfg.effective_burn_in();
    let total = burn_in + cfg.horizon;
    let mut prev = DMatrix::zeros(n, p);
    let mut y0 = prev.clone();
    let mut ys = Vec::with_capacity(cfg.horizon);
    let mut xs = Vec::with_capacity(cfg.horizon);
    let mut es = Vec::with_capacity(cfg.horizon);
    for step in 0..total {
        let mut regs = Vec::with_capacity(cfg.regressors.q());
        if cfg.regressors.intercept {
            regs.push(DMatrix::from_element(n, p, 1.0));
        }
        for _ in 0..cfg.regressors.standard_normal {
            regs.push(DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal)));
        }
        let e = DMatrix::from_fn(n, p, |_, _| {
            let z: f64 = match &student {
                Some(t) => t.sample(&mut rng) * t_scale,
                None => rng.sample(StandardNormal),
            };
            sd * z
        });
        let rhs = regression_term(&regs, &params.b, n, p) + &prev * &params.pi + &e;
        let y = filter.solve(&rhs)?;
        if step + 1 == burn_in {
            y0 = y.clone();
        }
        if step >= burn_in {
            ys.push(y.clone());
            xs.push(regs);
            es.push(e);
        }
        prev = y;
    }
    let data = PanelData::new(y0, ys, xs, cfg.regressors.names())?;
    Ok(Simulation { data, innovations: es })
}

/// Maps every row of `Y_0, Y_1, ..., Y_T` back to the simplex.
/// `out[t][i]` is unit `i` at time `t`, with `t = 0` the initial state.
pub fn to_compositions(data: &PanelData, basis: &IlrBasis) -> Result<Vec<Vec<Composition>>> {
    if basis.coords() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), got: basis.coords() });
    }
    std::iter::once(&data.y0)
        .chain(data.y.iter())
        .map(|y| (0..y.nrows()).map(|i| basis.ilr_inv(&y.row(i).transpose(), 1.0)).collect())
        .collect()
}

/// Simulates and returns both the coordinate panel and its compositions.
pub fn simulate_compositions(cfg: &SimConfig, w: &SpatialWeights, basis: &IlrBasis) -> Result<(PanelData, Vec<Vec<Composition>>)> {
    let data = simulate(cfg, w)?;
    let comps = to_compositions(&data, basis)?;
    Ok((data, comps))
}
