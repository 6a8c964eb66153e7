//! CSV readers and writers for panels, regressors, weights, fits and
//! study tables. Floats are written with shortest round-trip formatting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::model::{PanelData, INTERCEPT};
use crate::montecarlo::{RunManifest, SummaryRow};
use crate::simplex::{closure_with_policy, BasisMode, Composition, IlrBasis, ZeroPolicy};
use crate::weights::SpatialWeights;

/// Spacing of date-valued time keys.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    #[default]
    Monthly,
    Annual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum TimeKey {
    Index(i64),
    Date(NaiveDate),
}

fn parse_time(s: &str) -> Option<TimeKey> {
    if let Ok(i) = s.parse::<i64>() {
        return Some(TimeKey::Index(i));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d"))
        .ok()
        .map(TimeKey::Date)
}

fn check_equidistant(keys: &[TimeKey], labels: &[String], freq: Frequency) -> Result<()> {
    let ordinal = |k: &TimeKey| -> Result<i64> {
        match (k, freq) {
            (TimeKey::Index(i), _) => Ok(*i),
            (TimeKey::Date(d), Frequency::Monthly) => Ok(d.year() as i64 * 12 + d.month0() as i64),
            (TimeKey::Date(d), Frequency::Annual) => Ok(d.year() as i64),
        }
    };
    if keys.iter().any(|k| matches!(k, TimeKey::Index(_))) && keys.iter().any(|k| matches!(k, TimeKey::Date(_))) {
        return Err(Error::RaggedTimes("integer and date time keys are mixed".into()));
    }
    if let [TimeKey::Date(first), ..] = keys {
        let same_anchor = |d: &NaiveDate| match freq {
            Frequency::Monthly => d.day() == first.day(),
            Frequency::Annual => d.day() == first.day() && d.month() == first.month(),
        };
        if let Some((k, _)) = keys.iter().enumerate().find(|(_, k)| !matches!(k, TimeKey::Date(d) if same_anchor(d))) {
            return Err(Error::RaggedTimes(format!("time '{}' is off the {freq:?} grid", labels[k])));
        }
    }
    let ords = keys.iter().map(ordinal).collect::<Result<Vec<_>>>()?;
    if ords.len() >= 2 {
        let step = ords[1] - ords[0];
        if let Some(k) = (1..ords.len()).find(|&k| ords[k] - ords[k - 1] != step || step <= 0) {
            return Err(Error::RaggedTimes(format!("step from '{}' to '{}' differs from the first step", labels[k - 1], labels[k])));
        }
    }
    Ok(())
}

/// Orders labels such as `part_2 < part_10` by their trailing number.
fn natural_key(s: &str) -> (String, Option<u64>, String) {
    let digits = s.len() - s.bytes().rev().take_while(u8::is_ascii_digit).count();
    let (head, tail) = s.split_at(digits);
    (head.to_string(), tail.parse().ok(), s.to_string())
}

/// Canonical orderings shared by a panel and everything aligned to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    /// Region ids in lexicographic order; row `i` of every matrix.
    pub regions: Vec<String>,
    /// Time labels in chronological order; the first is the initial state.
    pub times: Vec<String>,
    /// Part (or coordinate) labels.
    pub labels: Vec<String>,
}

impl IdMap {
    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.regions.binary_search_by(|r| r.as_str().cmp(id)).ok()
    }

    /// Ids used for simulated panels: zero padding keeps lexicographic
    /// order equal to grid order.
    pub fn synthetic(n: usize, periods: usize, labels: Vec<String>) -> Self {
        let width = n.saturating_sub(1).to_string().len().max(4);
        Self {
            regions: (0..n).map(|i| format!("u{i:0width$}")).collect(),
            times: (0..periods).map(|t| t.to_string()).collect(),
            labels,
        }
    }
}

pub fn part_labels(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("part_{k}")).collect()
}

pub fn coord_labels(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("ilr_{k}")).collect()
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).has_headers(true).from_reader(file))
}

fn columns(path: &Path, rdr: &mut csv::Reader<File>, names: &[&str]) -> Result<Vec<usize>> {
    let headers = rdr.headers()?.clone();
    names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::parse(path, format!("missing column '{name}' (header is '{}')", headers.iter().collect::<Vec<_>>().join(","))))
        })
        .collect()
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::parse(path, format!("line {line}: '{field}' is not a number")))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// A long `(region, time, label, value)` file pivoted to one `n x k`
/// matrix per time.
#[derive(Debug, Clone)]
pub struct LongTable {
    pub ids: IdMap,
    pub slices: Vec<DMatrix<f64>>,
}

fn read_long(path: &Path, label_column: &str, frequency: Frequency) -> Result<LongTable> {
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["region_id", "time", label_column, "value"])?;
    let mut cells: HashMap<(String, String, String), f64> = HashMap::new();
    let mut regions = BTreeSet::new();
    let mut times: BTreeMap<TimeKey, String> = BTreeMap::new();
    let mut labels = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let (region, time, label) = (rec[cols[0]].to_string(), rec[cols[1]].to_string(), rec[cols[2]].to_string());
        let value = parse_f64(path, line, &rec[cols[3]])?;
        let key = parse_time(&time).ok_or_else(|| Error::parse(path, format!("line {line}: time '{time}' is neither an integer nor an ISO date")))?;
        if let Some(prev) = times.get(&key) {
            if *prev != time {
                return Err(Error::parse(path, format!("line {line}: time '{time}' duplicates '{prev}'")));
            }
        }
        times.insert(key, time.clone());
        regions.insert(region.clone());
        labels.insert(natural_key(&label));
        if cells.insert((region.clone(), time.clone(), label.clone()), value).is_some() {
            return Err(Error::parse(path, format!("line {line}: duplicate record for ({region}, {time}, {label})")));
        }
    }
    if cells.is_empty() {
        return Err(Error::parse(path, "no records"));
    }
    let keys: Vec<TimeKey> = times.keys().copied().collect();
    let ids = IdMap {
        regions: regions.into_iter().collect(),
        times: times.into_values().collect(),
        labels: labels.into_iter().map(|(_, _, s)| s).collect(),
    };
    check_equidistant(&keys, &ids.times, frequency)?;
    let mut slices = Vec::with_capacity(ids.times.len());
    for time in &ids.times {
        let mut m = DMatrix::zeros(ids.regions.len(), ids.labels.len());
        for (i, region) in ids.regions.iter().enumerate() {
            for (k, label) in ids.labels.iter().enumerate() {
                m[(i, k)] = *cells.get(&(region.clone(), time.clone(), label.clone())).ok_or_else(|| Error::MissingCell {
                    region: region.clone(),
                    time: time.clone(),
                    part: label.clone(),
                })?;
            }
        }
        slices.push(m);
    }
    Ok(LongTable { ids, slices })
}

#[derive(Debug, Clone, Default)]
pub struct PanelOptions {
    pub basis: Option<BasisMode>,
    pub zero_policy: ZeroPolicy,
    pub frequency: Frequency,
}

/// A compositional panel and its coordinates.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    /// Coordinates with no regressors attached yet.
    pub data: PanelData,
    pub basis: IlrBasis,
    pub ids: IdMap,
    /// Closed shares per time, `n x D`, including the initial period.
    pub shares: Vec<DMatrix<f64>>,
    /// Number of zero parts that were replaced.
    pub replaced_zeros: usize,
}

/// Reads `region_id,time,part,value`, closes each `(region, time)` row,
/// and maps it to ilr coordinates. The earliest time is `Y_0`.
pub fn load_panel(path: impl AsRef<Path>, opts: &PanelOptions) -> Result<LoadedPanel> {
    let path = path.as_ref();
    let table = read_long(path, "part", opts.frequency)?;
    let d = table.ids.labels.len();
    if table.ids.times.len() < 2 {
        return Err(Error::InvalidConfig("a panel needs at least two time points".into()));
    }
    let mode = opts.basis.clone().unwrap_or(BasisMode::Balance(crate::simplex::Partition::balanced(d)?));
    let basis = IlrBasis::build(d, mode)?;
    let mut replaced_zeros = 0;
    let mut shares = Vec::with_capacity(table.slices.len());
    let mut coords = Vec::with_capacity(table.slices.len());
    for (t, slice) in table.slices.iter().enumerate() {
        let mut closed = DMatrix::zeros(slice.nrows(), d);
        let mut y = DMatrix::zeros(slice.nrows(), d - 1);
        for i in 0..slice.nrows() {
            let row: Vec<f64> = slice.row(i).iter().copied().collect();
            let cell = |k: usize| (table.ids.regions[i].clone(), table.ids.times[t].clone(), table.ids.labels[k].clone());
            if let Some(k) = row.iter().position(|v| *v < 0.0 || !v.is_finite()) {
                let (region, time, part) = cell(k);
                return Err(Error::parse(path, format!("negative or non-finite value at ({region}, {time}, {part})")));
            }
            if opts.zero_policy == ZeroPolicy::Reject {
                if let Some(k) = row.iter().position(|v| *v == 0.0) {
                    let (region, time, part) = cell(k);
                    return Err(Error::ZeroPart { region, time, part });
                }
            }
            let (comp, replaced) = closure_with_policy(&row, 1.0, opts.zero_policy)?;
            replaced_zeros += replaced;
            closed.row_mut(i).copy_from_slice(comp.parts());
            y.row_mut(i).copy_from(&basis.ilr(&comp)?.transpose());
        }
        shares.push(closed);
        coords.push(y);
    }
    if replaced_zeros > 0 {
        log::warn!("{replaced_zeros} zero parts replaced before closure");
    }
    let y0 = coords.remove(0);
    let periods = coords.len();
    let data = PanelData::new(y0, coords, vec![Vec::new(); periods], Vec::new())?;
    Ok(LoadedPanel { data, basis, ids: table.ids, shares, replaced_zeros })
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Writes compositions as `region_id,time,part,value`. `comps[t][i]` is
/// region `ids.regions[i]` at time `ids.times[t]`.
pub fn save_panel(path: impl AsRef<Path>, ids: &IdMap, comps: &[Vec<Composition>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["region_id", "time", "part", "value"])?;
    for (t, row) in comps.iter().enumerate() {
        for (i, c) in row.iter().enumerate() {
            for (k, v) in c.parts().iter().enumerate() {
                w.write_record([&ids.regions[i], &ids.times[t], &ids.labels[k], &fmt(*v)])?;
            }
        }
    }
    finish(path, w)
}

/// Shares of a loaded panel as compositions, `out[t][i]`.
pub fn shares_to_compositions(shares: &[DMatrix<f64>]) -> Result<Vec<Vec<Composition>>> {
    shares
        .iter()
        .map(|m| (0..m.nrows()).map(|i| Composition::new(m.row(i).iter().copied().collect(), 1.0)).collect())
        .collect()
}

/// Writes coordinates as `region_id,time,coord,value`; `coords[t]` is `n x p`.
pub fn save_coordinates(path: impl AsRef<Path>, ids: &IdMap, coords: &[DMatrix<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["region_id", "time", "coord", "value"])?;
    for (t, m) in coords.iter().enumerate() {
        for i in 0..m.nrows() {
            for k in 0..m.ncols() {
                w.write_record([&ids.regions[i], &ids.times[t], &ids.labels[k], &fmt(m[(i, k)])])?;
            }
        }
    }
    finish(path, w)
}

pub fn load_coordinates(path: impl AsRef<Path>, frequency: Frequency) -> Result<LongTable> {
    read_long(path.as_ref(), "coord", frequency)
}

/// Regressor names with `x[t][i]`, each `n x p`.
pub type RegressorTable = (Vec<String>, Vec<Vec<DMatrix<f64>>>);

/// Reads `region_id,time,regressor,component,value` and returns, for each
/// of the panel's periods after the first, one `n x p` matrix per
/// regressor, with regressor names sorted. `component = *` broadcasts the
/// value to every column.
pub fn load_regressors(path: impl AsRef<Path>, ids: &IdMap, p: usize) -> Result<RegressorTable> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["region_id", "time", "regressor", "component", "value"])?;
    let time_index: HashMap<TimeKey, usize> =
        ids.times.iter().enumerate().filter_map(|(t, s)| parse_time(s).map(|k| (k, t))).collect();
    let mut cells: BTreeMap<String, HashMap<(usize, usize, usize), f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let region = &rec[cols[0]];
        let i = ids.region_index(region).ok_or_else(|| Error::Alignment(format!("{}: line {line}: region '{region}' is not in the panel", path.display())))?;
        let time = &rec[cols[1]];
        let Some(&t) = parse_time(time).and_then(|k| time_index.get(&k)) else {
            return Err(Error::Alignment(format!("{}: line {line}: time '{time}' is not in the panel", path.display())));
        };
        let value = parse_f64(path, line, &rec[cols[4]])?;
        let comp = &rec[cols[3]];
        let targets: Vec<usize> = if comp == "*" {
            (0..p).collect()
        } else {
            match comp.parse::<usize>() {
                Ok(j) if (1..=p).contains(&j) => vec![j - 1],
                _ => return Err(Error::parse(path, format!("line {line}: component '{comp}' not in 1..{p} or '*'"))),
            }
        };
        let entry = cells.entry(rec[cols[2]].to_string()).or_default();
        for j in targets {
            if entry.insert((t, i, j), value).is_some() {
                return Err(Error::parse(path, format!("line {line}: duplicate value for ({region}, {time}, {}, {})", &rec[cols[2]], j + 1)));
            }
        }
    }
    let names: Vec<String> = cells.keys().cloned().collect();
    let periods = ids.times.len() - 1;
    let mut out = vec![Vec::with_capacity(names.len()); periods];
    for name in &names {
        let entry = &cells[name];
        for (t, slot) in out.iter_mut().enumerate() {
            let mut m = DMatrix::zeros(ids.regions.len(), p);
            for i in 0..ids.regions.len() {
                for j in 0..p {
                    m[(i, j)] = *entry.get(&(t + 1, i, j)).ok_or_else(|| {
                        Error::Alignment(format!(
                            "regressor '{name}' has no value for region '{}', time '{}', component {}",
                            ids.regions[i],
                            ids.times[t + 1],
                            j + 1
                        ))
                    })?;
                }
            }
            slot.push(m);
        }
    }
    Ok((names, out))
}

/// Returns `data` with `names`/`xs` appended to its regressors, optionally
/// after a leading intercept.
pub fn attach_regressors(data: &PanelData, intercept: bool, names: Vec<String>, xs: Vec<Vec<DMatrix<f64>>>) -> Result<PanelData> {
    let (n, p, periods) = (data.n(), data.p(), data.t());
    let mut all_names = data.regressor_names.clone();
    let mut x = data.x.clone();
    if intercept {
        all_names.insert(0, INTERCEPT.to_string());
        for slot in &mut x {
            slot.insert(0, DMatrix::from_element(n, p, 1.0));
        }
    }
    if !xs.is_empty() {
        if xs.len() != periods {
            return Err(Error::Alignment(format!("regressors cover {} periods, panel has {periods}", xs.len())));
        }
        for (slot, extra) in x.iter_mut().zip(xs) {
            slot.extend(extra);
        }
        all_names.extend(names);
    }
    PanelData::new(data.y0.clone(), data.y.clone(), x, all_names)
}

/// `i,j` pairs (0-based) from an adjacency file; extra columns are ignored.
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["i", "j"])?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let idx = |k: usize| rec[cols[k]].parse::<usize>().map_err(|_| Error::parse(path, format!("line {line}: '{}' is not a 0-based index", &rec[cols[k]])));
        pairs.push((idx(0)?, idx(1)?));
    }
    Ok(pairs)
}

/// `id,x,y` rows from a coordinates file, in file order.
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<(String, f64, f64)>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["id", "x", "y"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        out.push((rec[cols[0]].to_string(), parse_f64(path, line, &rec[cols[1]])?, parse_f64(path, line, &rec[cols[2]])?));
    }
    Ok(out)
}

/// Reorders points to the panel's region order.
pub fn align_points(points: &[(String, f64, f64)], ids: &IdMap) -> Result<Vec<(f64, f64)>> {
    let mut slots = vec![None; ids.regions.len()];
    for (id, x, y) in points {
        let i = ids.region_index(id).ok_or_else(|| Error::Alignment(format!("coordinate id '{id}' is not in the panel")))?;
        if slots[i].replace((*x, *y)).is_some() {
            return Err(Error::Alignment(format!("coordinate id '{id}' appears twice")));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Alignment(format!("region '{}' has no coordinates", ids.regions[i]))))
        .collect()
}

/// Writes `i,j,weight`, one row per stored entry.
pub fn save_weights(path: impl AsRef<Path>, w: &SpatialWeights) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    out.write_record(["i", "j", "weight"])?;
    for (i, j, v) in w.triplets() {
        out.write_record([i.to_string(), j.to_string(), fmt(v)])?;
    }
    finish(path, out)
}

/// One line of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub block: String,
    pub coef: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub t_stat: Option<f64>,
}

/// Coefficient rows in table order: regression blocks, `Ψ`, `Π`, `σ`.
pub fn fit_rows(fit: &FitResult) -> Vec<FitRow> {
    let layout = fit.layout;
    let row = |block: &str, coef: String, k: usize| FitRow {
        block: block.to_string(),
        coef,
        estimate: fit.estimates[k],
        std_error: fit.std_errors[k],
        t_stat: fit.t_stats[k],
    };
    let mut rows = Vec::with_capacity(layout.len());
    let mut slope = 0;
    for i in 0..layout.q {
        let is_intercept = fit.regressor_names.get(i).is_some_and(|s| s == INTERCEPT);
        let label = if is_intercept {
            0
        } else {
            slope += 1;
            slope
        };
        for j in 0..layout.p {
            rows.push(row(if is_intercept { "intercept" } else { "beta" }, format!("beta_{{{label},{}}}", j + 1), layout.beta(i, j)));
        }
    }
    for block in ["psi", "pi"] {
        for j in 0..layout.p {
            for k in 0..layout.p {
                let idx = if block == "psi" { layout.psi(j, k) } else { layout.pi(j, k) };
                rows.push(row(block, format!("{block}_{{{},{}}}", j + 1, k + 1), idx));
            }
        }
    }
    rows.push(row("sigma", "sigma".to_string(), layout.sigma()));
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn save_fit(path: impl AsRef<Path>, fit: &FitResult) -> Result<()> {
    save_fit_rows(path, &fit_rows(fit))
}

pub fn save_fit_rows(path: impl AsRef<Path>, rows: &[FitRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["block", "coef", "estimate", "std_error", "t_stat"])?;
    for r in rows {
        w.write_record([r.block.clone(), r.coef.clone(), fmt(r.estimate), opt(r.std_error), opt(r.t_stat)])?;
    }
    finish(path, w)
}

pub fn read_fit(path: impl AsRef<Path>) -> Result<Vec<FitRow>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let cols = columns(path, &mut rdr, &["block", "coef", "estimate", "std_error", "t_stat"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let optional = |k: usize| -> Result<Option<f64>> {
            let s = &rec[cols[k]];
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(path, line, s).map(Some)
            }
        };
        rows.push(FitRow {
            block: rec[cols[0]].to_string(),
            coef: rec[cols[1]].to_string(),
            estimate: parse_f64(path, line, &rec[cols[2]])?,
            std_error: optional(3)?,
            t_stat: optional(4)?,
        });
    }
    Ok(rows)
}

pub fn save_mc(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["param_group", "param", "side", "n", "T", "rmse", "bias", "n_fail"])?;
    for r in rows {
        w.write_record([
            r.param_group.clone(),
            r.param.clone(),
            r.side.to_string(),
            r.n.to_string(),
            r.horizon.to_string(),
            fmt(r.rmse),
            fmt(r.bias),
            r.n_fail.to_string(),
        ])?;
    }
    finish(path, w)
}

pub fn read_mc(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &RunManifest) -> Result<()> {
    save_json(path, manifest)
}

/// Coordinates of every period of a panel, initial state first.
pub fn panel_coordinates(data: &PanelData) -> Vec<DMatrix<f64>> {
    std::iter::once(data.y0.clone()).chain(data.y.iter().cloned()).collect()
}

/// Maps `n x p` coordinate slices back to compositions with `basis`.
pub fn coordinates_to_compositions(slices: &[DMatrix<f64>], basis: &IlrBasis) -> Result<Vec<Vec<Composition>>> {
    slices
        .iter()
        .map(|m| (0..m.nrows()).map(|i| basis.ilr_inv(&DVector::from_iterator(m.ncols(), m.row(i).iter().copied()), 1.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    fn toy(equal: bool) -> String {
        let mut s = String::from("region_id,time,part,value\n");
        for r in ["b", "a"] {
            for t in 1..=3 {
                for (k, part) in ["x", "y", "z"].iter().enumerate() {
                    let v = if equal { 5.0 } else { (k + t) as f64 };
                    writeln!(s, "{r},{t},{part},{v}").unwrap();
                }
            }
        }
        s
    }

    #[test]
    fn equal_parts_give_zero_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let panel = load_panel(write(&dir, "p.csv", &toy(true)), &PanelOptions::default()).unwrap();
        assert_eq!(panel.ids.regions, vec!["a", "b"]);
        assert_eq!(panel.data.t(), 2);
        assert!(panel.data.y0.amax() < 1e-15 && panel.data.y.iter().all(|y| y.amax() < 1e-15));
    }

    #[test]
    fn panel_round_trip_and_row_order_invariance() {
        let dir = tempfile::tempdir().unwrap();
        let body = toy(false);
        let a = load_panel(write(&dir, "a.csv", &body), &PanelOptions::default()).unwrap();
        let mut lines: Vec<&str> = body.lines().skip(1).collect();
        lines.reverse();
        let b = load_panel(write(&dir, "b.csv", &format!("# shuffled\nregion_id,time,part,value\n{}\n", lines.join("\n"))), &PanelOptions::default()).unwrap();
        assert_eq!(a.data, b.data);
        let out = dir.path().join("out.csv");
        save_panel(&out, &a.ids, &shares_to_compositions(&a.shares).unwrap()).unwrap();
        let c = load_panel(&out, &PanelOptions::default()).unwrap();
        for (x, y) in a.shares.iter().zip(&c.shares) {
            assert!((x - y).amax() < 1e-9);
        }
    }

    #[test]
    fn missing_cell_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = toy(false).lines().filter(|l| *l != "a,2,y,3").map(|l| format!("{l}\n")).collect();
        let err = load_panel(write(&dir, "m.csv", &body), &PanelOptions::default()).unwrap_err();
        match err {
            Error::MissingCell { region, time, part } => assert_eq!((region.as_str(), time.as_str(), part.as_str()), ("a", "2", "y")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn zeros_and_ragged_times() {
        let dir = tempfile::tempdir().unwrap();
        let body = toy(false).replace("a,2,y,3", "a,2,y,0");
        let path = write(&dir, "z.csv", &body);
        assert!(matches!(load_panel(&path, &PanelOptions::default()), Err(Error::ZeroPart { .. })));
        let opts = PanelOptions { zero_policy: ZeroPolicy::Replace { delta: 1e-12 }, ..Default::default() };
        let p = load_panel(&path, &opts).unwrap();
        assert_eq!(p.replaced_zeros, 1);
        assert!(p.data.y.iter().all(|y| y.iter().all(|v| v.is_finite())));
        let ragged = toy(false).replace(",3,", ",4,");
        assert!(matches!(load_panel(write(&dir, "r.csv", &ragged), &PanelOptions::default()), Err(Error::RaggedTimes(_))));
    }

    #[test]
    fn monthly_dates() {
        let dir = tempfile::tempdir().unwrap();
        let body = toy(false).replace(",1,", ",2023-11,").replace(",2,", ",2023-12,").replace(",3,", ",2024-01,");
        let p = load_panel(write(&dir, "d.csv", &body), &PanelOptions::default()).unwrap();
        assert_eq!(p.ids.times, vec!["2023-11", "2023-12", "2024-01"]);
        let opts = PanelOptions { frequency: Frequency::Annual, ..Default::default() };
        assert!(matches!(load_panel(write(&dir, "d2.csv", &body), &opts), Err(Error::RaggedTimes(_))));
    }

    #[test]
    fn regressors_broadcast_and_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let panel = load_panel(write(&dir, "p.csv", &toy(false)), &PanelOptions::default()).unwrap();
        let mut star = String::from("region_id,time,regressor,component,value\n");
        let mut explicit = star.clone();
        for r in ["a", "b"] {
            for t in 2..=3 {
                writeln!(star, "{r},{t},income,*,{}", t * 10).unwrap();
                for j in 1..=2 {
                    writeln!(explicit, "{r},{t},income,{j},{}", t * 10).unwrap();
                }
            }
        }
        let a = load_regressors(write(&dir, "s.csv", &star), &panel.ids, 2).unwrap();
        let b = load_regressors(write(&dir, "e.csv", &explicit), &panel.ids, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, vec!["income"]);
        let bad = star.replace("b,2,", "zz,2,");
        let err = load_regressors(write(&dir, "bad.csv", &bad), &panel.ids, 2).unwrap_err();
        assert!(matches!(&err, Error::Alignment(m) if m.contains("'zz'")), "{err}");
        let data = attach_regressors(&panel.data, true, a.0, a.1).unwrap();
        assert_eq!(data.regressor_names, vec!["intercept", "income"]);
    }

    #[test]
    fn natural_label_order() {
        let mut labels = vec!["part_10", "part_2", "part_1"];
        labels.sort_by_key(|s| natural_key(s));
        assert_eq!(labels, vec!["part_1", "part_2", "part_10"]);
    }
}
