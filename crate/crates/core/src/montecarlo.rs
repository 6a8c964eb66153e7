//! Replication harness: simulate and refit over a grid of panel sizes.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, FitOptions, Optimizer, ParamLayout};
use crate::model::ModelParams;
use crate::simulate::{simulate, SimConfig};
use crate::weights::rook_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Sides {4, 6}, horizons {20, 80}, 20 replications.
    Quick,
    /// Sides {4, 6, 8}, horizons {20, 80, 160}, 100 replications.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Preset::Quick),
            "full" => Ok(Preset::Full),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}' (expected quick or full)"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Quick => "quick",
            Preset::Full => "full",
        })
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub preset: Preset,
    pub grid_sides: Vec<usize>,
    pub horizons: Vec<usize>,
    pub replications: usize,
    pub params: ModelParams,
    pub seed: u64,
    /// Worker count; `None` uses all available cores.
    pub threads: Option<usize>,
    pub burn_in: usize,
    pub retain_estimates: bool,
    pub fit: FitOptions,
}

impl McConfig {
    pub fn preset(preset: Preset) -> Self {
        let (grid_sides, horizons, replications) = match preset {
            Preset::Quick => (vec![4, 6], vec![20, 80], 20),
            Preset::Full => (vec![4, 6, 8], vec![20, 80, 160], 100),
        };
        Self {
            preset,
            grid_sides,
            horizons,
            replications,
            params: ModelParams::simulation_design(),
            seed: 0,
            threads: None,
            burn_in: 100,
            retain_estimates: false,
            fit: FitOptions { std_errors: false, ..FitOptions::default() },
        }
    }

    /// Parses a `key = value` study file. Keys left out keep the values of
    /// `preset` (itself a key, default `full`).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_preset(text, None)
    }

    /// Like [`McConfig::from_toml_str`], with `preset` taking precedence over
    /// the file's own `preset` key.
    pub fn from_toml_with_preset(text: &str, preset: Option<Preset>) -> Result<Self> {
        let mut file: McFile = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        file.preset = preset.or(file.preset);
        file.into_config()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.grid_sides.is_empty() || self.horizons.is_empty() {
            return Err(Error::InvalidConfig("grid_sides and horizons must be nonempty".into()));
        }
        if let Some(&side) = self.grid_sides.iter().find(|&&s| s < 2) {
            return Err(Error::SideTooSmall(side));
        }
        if self.horizons.contains(&0) {
            return Err(Error::InvalidConfig("horizons must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// `(side, horizon)` in row-major order; the index keys the RNG streams.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.grid_sides.iter().flat_map(|&s| self.horizons.iter().map(move |&t| (s, t))).collect()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct McFile {
    preset: Option<Preset>,
    grid_sides: Option<Vec<usize>>,
    horizons: Option<Vec<usize>>,
    replications: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    burn_in: Option<usize>,
    retain_estimates: Option<bool>,
    /// Row-major rows of each matrix.
    b: Option<Vec<Vec<f64>>>,
    psi: Option<Vec<Vec<f64>>>,
    pi: Option<Vec<Vec<f64>>>,
    sigma2: Option<f64>,
    optimizer: Option<Optimizer>,
    concentrate: Option<bool>,
    max_iterations: Option<usize>,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(format!("{name} has rows of unequal length")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl McFile {
    fn into_config(self) -> Result<McConfig> {
        let mut cfg = McConfig::preset(self.preset.unwrap_or(Preset::Full));
        macro_rules! take {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { cfg.$field = v; })*};
        }
        take!(grid_sides, horizons, replications, seed, burn_in, retain_estimates);
        cfg.threads = self.threads.or(cfg.threads);
        let base = cfg.params.clone();
        let b = self.b.as_deref().map(|r| matrix_from_rows("b", r)).transpose()?.unwrap_or(base.b);
        let psi = self.psi.as_deref().map(|r| matrix_from_rows("psi", r)).transpose()?.unwrap_or(base.psi);
        let pi = self.pi.as_deref().map(|r| matrix_from_rows("pi", r)).transpose()?.unwrap_or(base.pi);
        cfg.params = ModelParams::new(b, psi, pi, self.sigma2.unwrap_or(base.sigma2))?;
        if let Some(o) = self.optimizer {
            cfg.fit.optimizer = o;
        }
        if let Some(c) = self.concentrate {
            cfg.fit.concentrate = c;
        }
        if let Some(m) = self.max_iterations {
            cfg.fit.max_iterations = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Study vector: packed parameters with `σ²` in place of `σ`.
fn study_vector(layout: &ParamLayout, params: &ModelParams) -> Vec<f64> {
    let mut v: Vec<f64> = layout.pack(params).iter().copied().collect();
    v[layout.sigma()] = params.sigma2;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub side: usize,
    pub n: usize,
    pub horizon: usize,
    pub rmse: Vec<f64>,
    pub bias: Vec<f64>,
    pub n_ok: usize,
    pub n_fail: usize,
    /// Study vectors of successful replications, when retained.
    pub estimates: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub layout: ParamLayout,
    pub truth: Vec<f64>,
    pub cells: Vec<CellResult>,
}

impl McResult {
    pub fn cell(&self, side: usize, horizon: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.side == side && c.horizon == horizon)
    }

    pub fn exclusion_rate(&self) -> f64 {
        let fail: usize = self.cells.iter().map(|c| c.n_fail).sum();
        let total: usize = self.cells.iter().map(|c| c.n_fail + c.n_ok).sum();
        fail as f64 / total.max(1) as f64
    }
}

fn replicate(cfg: &McConfig, w: &crate::weights::SpatialWeights, horizon: usize, stream: u64, layout: &ParamLayout) -> Option<Vec<f64>> {
    let mut sim = SimConfig::new(cfg.params.clone(), horizon, cfg.seed);
    sim.stream = stream;
    sim.burn_in = cfg.burn_in;
    let outcome = simulate(&sim, w).and_then(|data| fit(&data, w, &cfg.fit));
    match outcome {
        Ok(res) if res.converged => Some(study_vector(layout, &res.params)),
        Ok(_) => {
            log::debug!("stream {stream:#x}: fit did not converge");
            None
        }
        Err(e) => {
            log::debug!("stream {stream:#x}: {e}");
            None
        }
    }
}

/// Runs every cell and replication. Replication `r` of cell `c` draws from
/// stream `(c << 32) | r` under `cfg.seed`, so results do not depend on the
/// number of workers.
pub fn run_study(cfg: &McConfig) -> Result<McResult> {
    cfg.validate()?;
    let layout = ParamLayout { q: cfg.params.q(), p: cfg.params.p() };
    let truth = study_vector(&layout, &cfg.params);
    let mut weights = Vec::new();
    for &side in &cfg.grid_sides {
        let w = rook_grid(side)?.row_standardize();
        let report = crate::model::stability_check(&cfg.params.psi, &w, cfg.fit.stability_margin);
        if !report.stable {
            return Err(Error::Unstable { radius: report.spectral_radius, bound: 1.0 - cfg.fit.stability_margin });
        }
        weights.push((side, w));
    }
    let cells = cfg.cells();
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.replications).map(move |r| (c, r))).collect();
    let run = || -> Vec<Option<Vec<f64>>> {
        tasks
            .par_iter()
            .map(|&(c, r)| {
                let (side, horizon) = cells[c];
                let w = &weights.iter().find(|(s, _)| *s == side).expect("weights built per side").1;
                replicate(cfg, w, horizon, ((c as u64) << 32) | r as u64, &layout)
            })
            .collect()
    };
    let outcomes = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run),
        None => run(),
    };

    let k = truth.len();
    let results = cells
        .iter()
        .enumerate()
        .map(|(c, &(side, horizon))| {
            let ok: Vec<&Vec<f64>> = outcomes[c * cfg.replications..(c + 1) * cfg.replications].iter().flatten().collect();
            let m = ok.len() as f64;
            let mut rmse = vec![f64::NAN; k];
            let mut bias = vec![f64::NAN; k];
            if !ok.is_empty() {
                for j in 0..k {
                    bias[j] = ok.iter().map(|e| e[j] - truth[j]).sum::<f64>() / m;
                    rmse[j] = (ok.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / m).sqrt();
                }
            }
            CellResult {
                side,
                n: side * side,
                horizon,
                rmse,
                bias,
                n_ok: ok.len(),
                n_fail: cfg.replications - ok.len(),
                estimates: cfg.retain_estimates.then(|| ok.into_iter().cloned().collect()),
            }
        })
        .collect();
    Ok(McResult { layout, truth, cells: results })
}

/// One line of the long-format study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub param_group: String,
    pub param: String,
    pub side: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rmse: f64,
    pub bias: f64,
    pub n_fail: usize,
}

pub const GROUP_AVERAGE: &str = "avg";

/// Names and study-vector indices per group, in output order.
pub fn parameter_groups(layout: &ParamLayout) -> Vec<(&'static str, Vec<(String, usize)>)> {
    let p = layout.p;
    let square = |name: &str, idx: &dyn Fn(usize, usize) -> usize| {
        (0..p).flat_map(|j| (0..p).map(move |k| (j, k))).map(|(j, k)| (format!("{name}_{{{},{}}}", j + 1, k + 1), idx(j, k))).collect::<Vec<_>>()
    };
    let beta = (0..layout.q)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| (format!("beta_{{{},{}}}", i, j + 1), layout.beta(i, j)))
        .collect();
    vec![
        ("psi", square("psi", &|j, k| layout.psi(j, k))),
        ("pi", square("pi", &|j, k| layout.pi(j, k))),
        ("beta", beta),
        ("sigma2", vec![("sigma2".to_string(), layout.sigma())]),
    ]
}

/// Long table: each parameter per cell, followed by its group average.
pub fn summarize(res: &McResult) -> Vec<SummaryRow> {
    let groups = parameter_groups(&res.layout);
    let mut rows = Vec::new();
    for cell in &res.cells {
        for (group, members) in &groups {
            let row = |param: String, rmse: f64, bias: f64| SummaryRow {
                param_group: group.to_string(),
                param,
                side: cell.side,
                n: cell.n,
                horizon: cell.horizon,
                rmse,
                bias,
                n_fail: cell.n_fail,
            };
            for (name, idx) in members {
                rows.push(row(name.clone(), cell.rmse[*idx], cell.bias[*idx]));
            }
            let m = members.len() as f64;
            let avg_rmse = members.iter().map(|(_, i)| cell.rmse[*i]).sum::<f64>() / m;
            let avg_bias = members.iter().map(|(_, i)| cell.bias[*i]).sum::<f64>() / m;
            rows.push(row(GROUP_AVERAGE.to_string(), avg_rmse, avg_bias));
        }
    }
    rows
}

/// Group-average RMSE for `group` in one cell.
pub fn group_rmse(res: &McResult, group: &str, side: usize, horizon: usize) -> Option<f64> {
    summarize(res)
        .into_iter()
        .find(|r| r.param_group == group && r.param == GROUP_AVERAGE && r.side == side && r.horizon == horizon)
        .map(|r| r.rmse)
}

/// Record of one study run, written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub preset: String,
    pub crate_version: String,
    pub started_at: String,
    pub wall_time_secs: f64,
    pub threads: usize,
    pub grid_sides: Vec<usize>,
    pub horizons: Vec<usize>,
    pub replications: usize,
    pub exclusion_rate: f64,
}

/// Runs the study and returns it with its manifest.
pub fn run_with_manifest(cfg: &McConfig) -> Result<(McResult, RunManifest)> {
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let clock = Instant::now();
    let res = run_study(cfg)?;
    let manifest = RunManifest {
        seed: cfg.seed,
        preset: cfg.preset.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        wall_time_secs: clock.elapsed().as_secs_f64(),
        threads: cfg.threads.unwrap_or_else(rayon::current_num_threads),
        grid_sides: cfg.grid_sides.clone(),
        horizons: cfg.horizons.clone(),
        replications: cfg.replications,
        exclusion_rate: res.exclusion_rate(),
    };
    Ok((res, manifest))
}
