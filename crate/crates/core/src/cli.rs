//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure (including
//! a fit that did not converge), 4 file system or parse failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, ErrorKind, Result};
use crate::estimate::{fit, printed_form_loglik, FitOptions, FitResult, Optimizer, Restrictions};
use crate::io::{self, FitRow, Frequency, IdMap, PanelOptions};
use crate::model::{stability_check, temporal_radius, ModelParams, StabilityReport};
use crate::montecarlo::{self, McConfig, Preset};
use crate::simplex::{BasisMode, IlrBasis, Partition, ZeroPolicy};
use crate::simulate::{simulate, SimConfig};
use crate::weights::{self, SpatialWeights};

#[derive(Debug, Parser)]
#[command(name = "cosmar", version, about = "Spatiotemporal autoregression for compositional panels")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the Monte Carlo pool (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Main output file.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a panel to ilr coordinates, or back with --inverse.
    Transform(TransformArgs),
    /// Build a spatial weight matrix and write it as i,j,weight.
    Weights(WeightsArgs),
    /// Simulate a compositional panel on a rook grid.
    Simulate(SimulateArgs),
    /// Fit the model to a panel and write the coefficient table.
    Fit(FitArgs),
    /// Run the Monte Carlo study.
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Balance,
    Helmert,
    Pivot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZeroArg {
    Reject,
    Replace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrequencyArg {
    Monthly,
    Annual,
}

#[derive(Debug, Clone, Args)]
pub struct BasisFlags {
    /// Orthonormal basis of the ilr transform.
    #[arg(long, value_enum, default_value = "balance")]
    pub basis: BasisArg,
    /// Binary partition for the balance basis, e.g. "((0,1),2)".
    #[arg(long)]
    pub partition: Option<String>,
}

impl BasisFlags {
    fn mode(&self, d: usize) -> Result<BasisMode> {
        Ok(match self.basis {
            BasisArg::Helmert => BasisMode::Helmert,
            BasisArg::Pivot => BasisMode::Pivot,
            BasisArg::Balance => BasisMode::Balance(match &self.partition {
                Some(s) => Partition::parse(s)?,
                None => Partition::balanced(d)?,
            }),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PanelFlags {
    #[command(flatten)]
    pub basis: BasisFlags,
    /// Handling of zero parts.
    #[arg(long, value_enum, default_value = "reject")]
    pub zero_policy: ZeroArg,
    /// Replacement share for zero parts.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    /// Spacing of date-valued time keys.
    #[arg(long, value_enum, default_value = "monthly")]
    pub frequency: FrequencyArg,
}

impl PanelFlags {
    fn frequency(&self) -> Frequency {
        match self.frequency {
            FrequencyArg::Monthly => Frequency::Monthly,
            FrequencyArg::Annual => Frequency::Annual,
        }
    }

    fn options(&self, d: usize) -> Result<PanelOptions> {
        Ok(PanelOptions {
            basis: Some(self.basis.mode(d)?),
            zero_policy: match self.zero_policy {
                ZeroArg::Reject => ZeroPolicy::Reject,
                ZeroArg::Replace => ZeroPolicy::Replace { delta: self.delta },
            },
            frequency: self.frequency(),
        })
    }
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Panel CSV (region_id,time,part,value), or coordinates with --inverse.
    #[arg(long)]
    pub input: PathBuf,
    /// Read coordinates (region_id,time,coord,value) and write compositions.
    #[arg(long)]
    pub inverse: bool,
    /// Comma-separated part labels for --inverse (default part_1..part_D).
    #[arg(long, value_delimiter = ',')]
    pub parts: Option<Vec<String>>,
    #[command(flatten)]
    pub panel: PanelFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsKind {
    Rook,
    Adjacency,
    Distance,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(value_enum)]
    pub kind: WeightsKind,
    /// Grid side for rook contiguity.
    #[arg(long)]
    pub side: Option<usize>,
    /// Adjacency (i,j) or coordinates (id,x,y) CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of units for adjacency input (default: largest index + 1).
    #[arg(long)]
    pub n: Option<usize>,
    /// Cutoff radius for distance weights.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Keep binary weights instead of row-standardising.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Side of the square rook grid (n = side^2).
    #[arg(long, default_value_t = 4)]
    pub side: usize,
    /// Number of periods after the initial state.
    #[arg(long, default_value_t = 20)]
    pub horizon: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    /// RNG stream under --seed.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Spatial matrix, rows separated by ';' (default: study design).
    #[arg(long)]
    pub psi: Option<String>,
    /// Temporal matrix, rows separated by ';'.
    #[arg(long)]
    pub pi: Option<String>,
    /// Slopes, one row per regressor starting with the intercept.
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Where to write the simulated regressors (region_id,time,regressor,component,value).
    #[arg(long)]
    pub regressors_out: Option<PathBuf>,
    #[command(flatten)]
    pub basis: BasisFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Bfgs,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodArg {
    Standard,
    /// Also report the likelihood in its printed form (experimental).
    PaperVerbatim,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV (region_id,time,part,value).
    #[arg(long)]
    pub panel: PathBuf,
    /// Regressor CSV (region_id,time,regressor,component,value).
    #[arg(long)]
    pub regressors: Option<PathBuf>,
    /// Add an all-ones regressor.
    #[arg(long)]
    pub intercept: bool,
    /// Rook weights on a side x side grid in region order.
    #[arg(long, conflicts_with_all = ["adjacency", "coords"])]
    pub rook_side: Option<usize>,
    /// Adjacency CSV with 0-based indices into the sorted region ids.
    #[arg(long, conflicts_with = "coords")]
    pub adjacency: Option<PathBuf>,
    /// Coordinates CSV (id,x,y) for distance-cutoff weights.
    #[arg(long, requires = "radius")]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Keep binary weights instead of row-standardising.
    #[arg(long)]
    pub binary: bool,
    /// Restrict the spatial matrix to zero.
    #[arg(long)]
    pub psi_zero: bool,
    /// Restrict the temporal matrix to zero.
    #[arg(long)]
    pub pi_zero: bool,
    #[arg(long, value_enum, default_value = "bfgs")]
    pub optimizer: OptimizerArg,
    /// Optimise the full likelihood instead of profiling out B, Pi and sigma.
    #[arg(long)]
    pub full_likelihood: bool,
    #[arg(long, value_enum, default_value = "standard")]
    pub likelihood: LikelihoodArg,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Gradient tolerance on the per-observation objective.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[command(flatten)]
    pub panel_flags: PanelFlags,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Grid of cells and replication count to start from (default: full).
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// TOML study file; its keys override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replications per cell; overrides the preset and the study file.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Run manifest path (default: <output>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Quick,
    Full,
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn output(cli: &Cli) -> Result<&Path> {
    cli.output.as_deref().ok_or_else(|| Error::InvalidConfig("--output is required for this command".into()))
}

/// Runs the parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Transform(a) => transform(cli, a),
        Command::Weights(a) => weights_cmd(cli, a),
        Command::Simulate(a) => simulate_cmd(cli, a),
        Command::Fit(a) => fit_cmd(cli, a),
        Command::Mc(a) => mc_cmd(cli, a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn transform(cli: &Cli, a: &TransformArgs) -> Result<i32> {
    let out = output(cli)?;
    if a.inverse {
        let table = io::load_coordinates(&a.input, a.panel.frequency())?;
        let d = table.ids.labels.len() + 1;
        let basis = IlrBasis::build(d, a.panel.basis.mode(d)?)?;
        let labels = match &a.parts {
            Some(p) if p.len() == d => p.clone(),
            Some(p) => return Err(Error::DimensionMismatch { expected: d, got: p.len() }),
            None => io::part_labels(d),
        };
        let comps = io::coordinates_to_compositions(&table.slices, &basis)?;
        let ids = IdMap { labels, ..table.ids };
        io::save_panel(out, &ids, &comps)?;
    } else {
        let d = count_parts(&a.input)?;
        let panel = io::load_panel(&a.input, &a.panel.options(d)?).inspect_err(|_| report_bad_records(&a.input))?;
        let ids = IdMap { labels: io::coord_labels(d - 1), ..panel.ids };
        io::save_coordinates(out, &ids, &io::panel_coordinates(&panel.data))?;
    }
    if cli.json {
        print_json(&serde_json::json!({ "output": out }))?;
    }
    Ok(0)
}

/// Number of distinct part labels in a panel file.
fn count_parts(path: &Path) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(err) => Error::io(path, err),
            other => Error::parse(path, format!("{other:?}")),
        })?;
    let headers = rdr.headers()?.clone();
    let col = headers.iter().position(|h| h == "part").ok_or_else(|| Error::parse(path, "missing column 'part'"))?;
    let mut parts = std::collections::BTreeSet::new();
    for rec in rdr.records() {
        parts.insert(rec?[col].to_string());
    }
    Ok(parts.len())
}

/// One diagnostic line per record with an unusable value.
fn report_bad_records(path: &Path) {
    let Ok(mut rdr) = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path) else {
        return;
    };
    let Some(col) = rdr.headers().ok().and_then(|h| h.iter().position(|c| c == "value")) else {
        return;
    };
    for rec in rdr.records().flatten() {
        let line = rec.position().map_or(0, |p| p.line());
        match rec[col].parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => {}
            Ok(v) => eprintln!("{}:{line}: value {v} is not strictly positive", path.display()),
            Err(_) => eprintln!("{}:{line}: '{}' is not a number", path.display(), &rec[col]),
        }
    }
}

#[derive(Serialize)]
struct WeightsSummary {
    n: usize,
    nnz: usize,
    sparsity: f64,
    islands: Vec<usize>,
    row_standardized: bool,
}

fn weights_cmd(cli: &Cli, a: &WeightsArgs) -> Result<i32> {
    let out = output(cli)?;
    let binary = match a.kind {
        WeightsKind::Rook => weights::rook_grid(a.side.ok_or_else(|| Error::InvalidConfig("rook weights need --side".into()))?)?,
        WeightsKind::Adjacency => {
            let pairs = io::load_adjacency(require(&a.input, "--input")?)?;
            let n = a.n.unwrap_or_else(|| pairs.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
            weights::from_adjacency(n, &pairs)?
        }
        WeightsKind::Distance => {
            let points = io::load_points(require(&a.input, "--input")?)?;
            let radius = a.radius.ok_or_else(|| Error::InvalidConfig("distance weights need --radius".into()))?;
            weights::distance_cutoff(&points.iter().map(|(_, x, y)| (*x, *y)).collect::<Vec<_>>(), radius)?
        }
    };
    let w = if a.binary { binary } else { binary.row_standardize() };
    io::save_weights(out, &w)?;
    let summary = WeightsSummary { n: w.n(), nnz: w.nnz(), sparsity: w.sparsity(), islands: w.islands(), row_standardized: !a.binary };
    if cli.json {
        print_json(&summary)?;
    } else {
        println!("{} units, {} edges, sparsity {:.4}, {} islands", summary.n, summary.nnz, summary.sparsity, summary.islands.len());
    }
    Ok(0)
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::InvalidConfig(format!("{flag} is required")))
}

/// Parses "a,b;c,d" into a row-major matrix.
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidConfig(format!("'{v}' is not a number in matrix '{s}'"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(format!("matrix '{s}' has rows of unequal length")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

#[derive(Serialize)]
struct SimulateSummary {
    n: usize,
    horizon: usize,
    parts: usize,
    stability: StabilityReport,
    temporal_radius: Option<f64>,
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs) -> Result<i32> {
    let out = output(cli)?;
    let design = ModelParams::simulation_design();
    let params = ModelParams::new(
        a.b.as_deref().map(parse_matrix).transpose()?.unwrap_or(design.b),
        a.psi.as_deref().map(parse_matrix).transpose()?.unwrap_or(design.psi),
        a.pi.as_deref().map(parse_matrix).transpose()?.unwrap_or(design.pi),
        a.sigma2.unwrap_or(design.sigma2),
    )?;
    let w = weights::rook_grid(a.side)?.row_standardize();
    let mut cfg = SimConfig::new(params.clone(), a.horizon, cli.seed);
    cfg.burn_in = a.burn_in;
    cfg.stream = a.stream;
    let data = simulate(&cfg, &w)?;
    let d = data.p() + 1;
    let basis = IlrBasis::build(d, a.basis.mode(d)?)?;
    let ids = IdMap::synthetic(data.n(), data.t() + 1, io::part_labels(d));
    io::save_panel(out, &ids, &io::coordinates_to_compositions(&io::panel_coordinates(&data), &basis)?)?;
    if let Some(path) = &a.regressors_out {
        save_simulated_regressors(path, &ids, &data)?;
    }
    let summary = SimulateSummary {
        n: data.n(),
        horizon: data.t(),
        parts: d,
        stability: stability_check(&params.psi, &w, 0.0),
        temporal_radius: temporal_radius(&params.psi, &params.pi, &w),
    };
    if cli.json {
        print_json(&summary)?;
    } else {
        println!("simulated {} units x {} periods with {} parts", summary.n, summary.horizon, summary.parts);
    }
    Ok(0)
}

/// Writes every non-intercept regressor in long format.
fn save_simulated_regressors(path: &Path, ids: &IdMap, data: &crate::model::PanelData) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::parse(path, format!("{other:?}")),
    })?;
    w.write_record(["region_id", "time", "regressor", "component", "value"])?;
    for (t, xs) in data.x.iter().enumerate() {
        for (name, m) in data.regressor_names.iter().zip(xs) {
            if name == crate::model::INTERCEPT {
                continue;
            }
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.write_record([&ids.regions[i], &ids.times[t + 1], name, &(j + 1).to_string(), &format!("{:?}", m[(i, j)])])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct FitReport<'a> {
    rows: &'a [FitRow],
    loglik: f64,
    printed_form_loglik: Option<f64>,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    n: usize,
    periods: usize,
    regressors: &'a [String],
    stability: StabilityReport,
    temporal_radius: Option<f64>,
    warnings: &'a [String],
}

fn build_weights(a: &FitArgs, ids: &IdMap) -> Result<SpatialWeights> {
    let n = ids.regions.len();
    let binary = if let Some(side) = a.rook_side {
        let w = weights::rook_grid(side)?;
        if w.n() != n {
            return Err(Error::Alignment(format!("rook grid has {} cells, panel has {n} regions", w.n())));
        }
        w
    } else if let Some(path) = &a.adjacency {
        weights::from_adjacency(n, &io::load_adjacency(path)?)?
    } else if let Some(path) = &a.coords {
        let radius = a.radius.ok_or_else(|| Error::InvalidConfig("--coords needs --radius".into()))?;
        weights::distance_cutoff(&io::align_points(&io::load_points(path)?, ids)?, radius)?
    } else {
        return Err(Error::InvalidConfig("one of --rook-side, --adjacency or --coords is required".into()));
    };
    Ok(if a.binary { binary } else { binary.row_standardize() })
}

fn fit_cmd(cli: &Cli, a: &FitArgs) -> Result<i32> {
    let out = output(cli)?;
    let d = count_parts(&a.panel)?;
    let panel = io::load_panel(&a.panel, &a.panel_flags.options(d)?)?;
    let (names, xs) = match &a.regressors {
        Some(path) => io::load_regressors(path, &panel.ids, d - 1)?,
        None => (Vec::new(), Vec::new()),
    };
    let data = io::attach_regressors(&panel.data, a.intercept, names, xs)?;
    let w = build_weights(a, &panel.ids)?;
    let opts = FitOptions {
        max_iterations: a.max_iter,
        gradient_tolerance: a.tol,
        optimizer: match a.optimizer {
            OptimizerArg::Bfgs => Optimizer::QuasiNewtonNumericGradient,
            OptimizerArg::NelderMead => Optimizer::NelderMead,
        },
        concentrate: !a.full_likelihood,
        restrictions: Restrictions { psi_zero: a.psi_zero, pi_zero: a.pi_zero },
        ..FitOptions::default()
    };
    let result = fit(&data, &w, &opts)?;
    io::save_fit(out, &result)?;
    let verbatim = match a.likelihood {
        LikelihoodArg::PaperVerbatim if result.params.sigma2 > 0.0 => Some(printed_form_loglik(&result.params, &data, &w)?),
        _ => None,
    };
    let rows = io::fit_rows(&result);
    let report = FitReport {
        rows: &rows,
        loglik: result.loglik,
        printed_form_loglik: verbatim,
        converged: result.converged,
        iterations: result.iterations,
        gradient_norm: result.gradient_norm,
        n: data.n(),
        periods: data.t(),
        regressors: &data.regressor_names,
        stability: stability_check(&result.params.psi, &w, 0.0),
        temporal_radius: temporal_radius(&result.params.psi, &result.params.pi, &w),
        warnings: &result.warnings,
    };
    if cli.json {
        print_json(&report)?;
    } else {
        print_table(&result, &report);
    }
    if result.converged {
        Ok(0)
    } else {
        eprintln!("error: optimizer did not converge; table written and flagged");
        Ok(3)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

fn print_table(result: &FitResult, report: &FitReport) {
    println!("{:<10} {:<14} {:>12} {:>12} {:>10}", "block", "coef", "estimate", "std_error", "t_stat");
    for r in report.rows {
        println!("{:<10} {:<14} {:>12.4} {:>12} {:>10}", r.block, r.coef, r.estimate, cell(r.std_error), cell(r.t_stat));
    }
    println!();
    println!("n = {}, T = {}, log-likelihood = {:.4}", report.n, report.periods, report.loglik);
    if let Some(v) = report.printed_form_loglik {
        println!("log-likelihood, printed form (experimental) = {v:.4}");
    }
    println!(
        "spatial radius = {:.4}, converged = {} after {} iterations",
        report.stability.spectral_radius, result.converged, result.iterations
    );
    if !result.converged {
        println!("NOT CONVERGED: estimates are the last iterate");
    }
    for w in report.warnings {
        println!("warning: {w}");
    }
}

fn mc_cmd(cli: &Cli, a: &McArgs) -> Result<i32> {
    let out = output(cli)?;
    let preset = a.preset.map(|p| match p {
        PresetArg::Quick => Preset::Quick,
        PresetArg::Full => Preset::Full,
    });
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            McConfig::from_toml_with_preset(&text, preset)?
        }
        None => McConfig::preset(preset.unwrap_or(Preset::Full)),
    };
    cfg.seed = cli.seed;
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    let (res, manifest) = montecarlo::run_with_manifest(&cfg)?;
    let rows = montecarlo::summarize(&res);
    io::save_mc(out, &rows)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    io::save_manifest(&manifest_path, &manifest)?;
    if cli.json {
        print_json(&rows)?;
    } else {
        println!("{:<8} {:>4} {:>5} {:>10} {:>10} {:>7}", "group", "n", "T", "rmse", "bias", "failed");
        for r in rows.iter().filter(|r| r.param == montecarlo::GROUP_AVERAGE) {
            println!("{:<8} {:>4} {:>5} {:>10.4} {:>10.4} {:>7}", r.param_group, r.n, r.horizon, r.rmse, r.bias, r.n_fail);
        }
        println!("exclusion rate {:.3}, wall time {:.1}s", manifest.exclusion_rate, manifest.wall_time_secs);
    }
    Ok(0)
}
