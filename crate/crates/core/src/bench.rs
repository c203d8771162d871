//! Potential-energy scans, error metrics, tolerance runs and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzSpec;
use crate::backend::{expectation_exact, BackendConfig, Estimator, Statevector};
use crate::error::{Error, Result};
use crate::fermion::Mapping;
use crate::moldata::{build_dipole, bundled_series, Axis, GeometrySeries, MolecularData};
use crate::optim::{Method, OptimizerOptions};
use crate::rng::derive_seed;
use crate::vqe::{prepared_state, vqe_minimize, VqeProblem};

/// Bond length whose energy stands in for the dissociated limit.
pub const DISSOCIATED_BOND: f64 = 4.0;
/// Environment variable capping the scan worker pool.
pub const THREADS_ENV: &str = "VQEBENCH_THREADS";

const DIPOLE_STREAM: u64 = 0xd1;
const GRID_MATCH: f64 = 1e-6;

/// Default dipole windows (Å) for the polar molecules of the suite.
pub fn default_dipole_window(molecule: &str) -> Option<(f64, f64)> {
    match molecule.to_ascii_lowercase().as_str() {
        "lih" => Some((1.3, 2.0)),
        "h2o" => Some((0.7, 1.2)),
        "hf" => Some((0.8, 1.4)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub mapping: Mapping,
    pub ansatz: AnsatzSpec,
    pub method: Method,
    pub optimizer: OptimizerOptions,
    pub backend: BackendConfig,
    pub seed: u64,
    /// Independent runs averaged per grid point.
    pub averaging: usize,
    pub dipole_axis: Axis,
    /// Worker threads; falls back to `VQEBENCH_THREADS`, then rayon's default.
    pub threads: Option<usize>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            mapping: Mapping::ParityReduced,
            ansatz: AnsatzSpec::Uccsd,
            method: Method::Cobyla,
            optimizer: OptimizerOptions::default(),
            backend: BackendConfig::Statevector,
            seed: 0,
            averaging: 1,
            dipole_axis: Axis::Z,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub geometry_param: f64,
    pub e_vqe: f64,
    pub e_exact: f64,
    pub dipole_vqe: Option<f64>,
    pub dipole_exact: Option<f64>,
    /// Totals over the averaged runs.
    pub n_iterations: usize,
    pub n_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub molecule: String,
    pub method: Method,
    pub ansatz: AnsatzSpec,
    pub mapping: Mapping,
    pub backend: BackendConfig,
    pub seed: u64,
    pub averaging: usize,
    pub max_iter: usize,
    pub points: Vec<ScanPoint>,
}

fn thread_count(cfg: Option<usize>) -> Option<usize> {
    cfg.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok()).filter(|&n| n > 0)
}

/// Runs `f` on a pool sized by `threads` / `VQEBENCH_THREADS`.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_count(threads) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

struct RunOutcome {
    energy: f64,
    dipole: Option<f64>,
    iterations: usize,
    evaluations: u64,
}

fn run_point(m: &MolecularData, cfg: &ScanConfig, seed: u64) -> Result<RunOutcome> {
    let p = VqeProblem::from_molecule(m, cfg.mapping, cfg.ansatz.clone(), cfg.backend.clone(), seed)?;
    let r = vqe_minimize(&p, cfg.method, &cfg.optimizer)?;
    let dipole = match &m.dipole {
        Some(_) => {
            let d = build_dipole(m, cfg.mapping, cfg.dipole_axis)?;
            Some(if cfg.backend.is_exact() {
                expectation_exact(&prepared_state(&p, &r.params)?, &d)?
            } else {
                Estimator::new(cfg.backend.clone(), derive_seed(seed, DIPOLE_STREAM)).energy(&p.circuit()?, &r.params, &d)?
            })
        }
        None => None,
    };
    Ok(RunOutcome { energy: r.energy, dipole, iterations: r.optimizer.n_iterations, evaluations: r.backend_calls })
}

fn scan_point(m: &MolecularData, index: usize, cfg: &ScanConfig) -> Result<ScanPoint> {
    let p = VqeProblem::from_molecule(m, cfg.mapping, cfg.ansatz.clone(), BackendConfig::Statevector, 0)?;
    let gs = p.exact()?;
    let dipole_exact = match &m.dipole {
        Some(_) => {
            let d = build_dipole(m, cfg.mapping, cfg.dipole_axis)?;
            Some(expectation_exact(&Statevector::from_amplitudes(gs.vector)?, &d)?)
        }
        None => None,
    };
    let k = cfg.averaging.max(1);
    let point_seed = derive_seed(cfg.seed, index as u64);
    let runs: Vec<RunOutcome> = (0..k)
        .into_par_iter()
        .map(|j| run_point(m, cfg, derive_seed(point_seed, j as u64)))
        .collect::<Result<_>>()?;
    let kf = k as f64;
    let e_vqe = runs.iter().map(|r| r.energy).sum::<f64>() / kf;
    let dipole_vqe = dipole_exact.map(|_| runs.iter().map(|r| r.dipole.unwrap_or(f64::NAN)).sum::<f64>() / kf);
    Ok(ScanPoint {
        geometry_param: m.geometry_param,
        e_vqe,
        e_exact: gs.energy,
        dipole_vqe,
        dipole_exact,
        n_iterations: runs.iter().map(|r| r.iterations).sum(),
        n_evaluations: runs.iter().map(|r| r.evaluations).sum(),
    })
}

/// Independent cold-start VQE runs over a geometry series, with the exact
/// reference and dipoles per point. Points (and averaged runs) fan out on
/// the worker pool; every run has its own seed so results do not depend on
/// scheduling.
pub fn scan_curve(series: &GeometrySeries, cfg: &ScanConfig) -> Result<ScanResult> {
    if series.is_empty() {
        return Err(Error::Domain("empty geometry series".into()));
    }
    let points = with_pool(cfg.threads, || {
        series
            .points()
            .par_iter()
            .enumerate()
            .map(|(i, m)| scan_point(m, i, cfg))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ScanResult {
        molecule: series.name().to_string(),
        method: cfg.method,
        ansatz: cfg.ansatz.clone(),
        mapping: cfg.mapping,
        backend: cfg.backend.clone(),
        seed: cfg.seed,
        averaging: cfg.averaging.max(1),
        max_iter: cfg.optimizer.max_iter_for(cfg.method),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub delta_gs: f64,
    pub delta_de: f64,
    pub dipole_rmse: Option<f64>,
    pub e_gs_exact: f64,
    pub e_gs_vqe: f64,
    pub e_inf_exact: f64,
    pub e_inf_vqe: f64,
    pub n_dipole_points: usize,
}

impl Metrics {
    /// Mean of the available metric columns.
    pub fn average(&self) -> f64 {
        match self.dipole_rmse {
            Some(d) => (self.delta_gs + self.delta_de + d) / 3.0,
            None => (self.delta_gs + self.delta_de) / 2.0,
        }
    }
}

fn curve_min(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

/// Ground-state, dissociation-energy and dipole errors of a scan. Each
/// curve's ground energy is its own grid minimum; the dissociated energy is
/// the 4 Å point.
pub fn compute_metrics(scan: &ScanResult, dipole_window: Option<(f64, f64)>) -> Result<Metrics> {
    let pts = &scan.points;
    if pts.is_empty() {
        return Err(Error::Domain("scan has no points".into()));
    }
    if pts.windows(2).any(|w| w[1].geometry_param <= w[0].geometry_param) {
        return Err(Error::Domain("scan grid must be strictly increasing".into()));
    }
    if pts.iter().any(|p| !p.e_vqe.is_finite() || !p.e_exact.is_finite()) {
        return Err(Error::NonFinite("scan energies".into()));
    }
    let e_gs_exact = curve_min(pts.iter().map(|p| p.e_exact));
    let e_gs_vqe = curve_min(pts.iter().map(|p| p.e_vqe));
    let inf = pts
        .iter()
        .find(|p| (p.geometry_param - DISSOCIATED_BOND).abs() < GRID_MATCH)
        .ok_or_else(|| Error::Domain(format!("scan does not include the {DISSOCIATED_BOND} Å point")))?;
    let de_exact = inf.e_exact - e_gs_exact;
    let de_vqe = inf.e_vqe - e_gs_vqe;
    let delta_gs = ((e_gs_exact - e_gs_vqe) / e_gs_exact).abs();
    let delta_de = if de_exact == 0.0 && de_vqe == 0.0 { 0.0 } else { ((de_exact - de_vqe) / de_exact).abs() };
    let (dipole_rmse, n_dipole_points) = match dipole_window {
        None => (None, 0),
        Some((lo, hi)) => {
            let inside: Vec<&ScanPoint> =
                pts.iter().filter(|p| p.geometry_param >= lo - GRID_MATCH && p.geometry_param <= hi + GRID_MATCH).collect();
            if inside.is_empty() {
                return Err(Error::Domain(format!("dipole window {lo}-{hi} Å contains no grid points")));
            }
            let mut sum = 0.0;
            for p in &inside {
                let (Some(a), Some(b)) = (p.dipole_exact, p.dipole_vqe) else {
                    return Err(Error::UnsupportedMetric("scan has no dipole data".into()));
                };
                sum += (a - b).powi(2);
            }
            (Some((sum / inside.len() as f64).sqrt()), inside.len())
        }
    };
    let m = Metrics {
        delta_gs,
        delta_de,
        dipole_rmse,
        e_gs_exact,
        e_gs_vqe,
        e_inf_exact: inf.e_exact,
        e_inf_vqe: inf.e_vqe,
        n_dipole_points,
    };
    if !m.delta_de.is_finite() || !m.dipole_rmse.unwrap_or(0.0).is_finite() {
        return Err(Error::NonFinite("metrics".into()));
    }
    Ok(m)
}

/// One persisted (molecule, optimizer) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scan: ScanResult,
    pub metrics: Metrics,
}

impl RunRecord {
    pub fn file_name(&self) -> String {
        format!("{}_{}.json", self.scan.molecule.to_ascii_lowercase(), self.scan.method.label().to_ascii_lowercase())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn save_records(records: &[RunRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in records {
        std::fs::write(dir.join(r.file_name()), r.to_json()?)?;
    }
    Ok(())
}

/// Loads every `*.json` record in `dir`, ordered by file name.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub optimizer: String,
    pub delta_gs: f64,
    pub delta_de: f64,
    pub delta_dipole: Option<f64>,
    pub average: f64,
}

impl ReportRow {
    /// Row whose average is the mean of the available metric columns.
    pub fn new(optimizer: impl Into<String>, delta_gs: f64, delta_de: f64, delta_dipole: Option<f64>) -> Self {
        let average = match delta_dipole {
            Some(d) => (delta_gs + delta_de + d) / 3.0,
            None => (delta_gs + delta_de) / 2.0,
        };
        ReportRow { optimizer: optimizer.into(), delta_gs, delta_de, delta_dipole, average }
    }
}

/// One row per optimizer: each metric averaged over the molecules that
/// report it.
pub fn aggregate_rows(records: &[RunRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<Method, Vec<&Metrics>> = BTreeMap::new();
    for r in records {
        groups.entry(r.scan.method).or_default().push(&r.metrics);
    }
    groups
        .into_iter()
        .map(|(method, ms)| {
            let n = ms.len() as f64;
            let gs = ms.iter().map(|m| m.delta_gs).sum::<f64>() / n;
            let de = ms.iter().map(|m| m.delta_de).sum::<f64>() / n;
            let dips: Vec<f64> = ms.iter().filter_map(|m| m.dipole_rmse).collect();
            let dip = (!dips.is_empty()).then(|| dips.iter().sum::<f64>() / dips.len() as f64);
            ReportRow::new(method.label(), gs, de, dip)
        })
        .collect()
}

/// Ordered `key: value` lines written above the table.
pub type ReportMeta = Vec<(String, String)>;

/// Header metadata shared by a set of records.
pub fn report_meta(records: &[RunRecord]) -> ReportMeta {
    let mut meta = ReportMeta::new();
    let Some(first) = records.first() else {
        return meta;
    };
    let s = &first.scan;
    let molecules: Vec<String> = {
        let mut v: Vec<String> = records.iter().map(|r| r.scan.molecule.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let shots = match &s.backend {
        BackendConfig::Statevector => "exact".to_string(),
        BackendConfig::Sampled { shots, .. } => shots.to_string(),
    };
    let noise = match &s.backend {
        BackendConfig::Sampled { noise: Some(n), .. } => format!("p1={} p2={} readout={:?}", n.p1, n.p2, n.readout),
        _ => "none".to_string(),
    };
    meta.push(("molecules".into(), molecules.join(",")));
    meta.push(("ansatz".into(), s.ansatz.label()));
    meta.push(("mapping".into(), s.mapping.label().into()));
    meta.push(("backend".into(), s.backend.label()));
    meta.push(("shots".into(), shots));
    meta.push(("noise".into(), noise));
    meta.push(("seed".into(), s.seed.to_string()));
    meta.push(("max_iter".into(), s.max_iter.to_string()));
    meta.push(("averaging".into(), s.averaging.to_string()));
    meta.push((
        "average_error".into(),
        "unitless mean of the metric columns (dipole column in e*a0)".into(),
    ));
    meta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Parse(format!("unknown report format {s:?}"))),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 5] = ["Optimizer", "Δgs", "Δde", "Δdipole", "Average Error"];

fn num(v: f64) -> String {
    format!("{v:.6e}")
}

/// Renders rows sorted by ascending average error (ties by name).
pub fn emit_report(rows: &[ReportRow], meta: &ReportMeta, format: ReportFormat) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(Error::Domain("report has no rows".into()));
    }
    let mut sorted: Vec<&ReportRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.average.total_cmp(&b.average).then_with(|| a.optimizer.cmp(&b.optimizer)));
    let cells = |r: &ReportRow| -> [String; 5] {
        [
            r.optimizer.clone(),
            num(r.delta_gs),
            num(r.delta_de),
            r.delta_dipole.map_or_else(|| "NA".to_string(), num),
            num(r.average),
        ]
    };
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            for (k, v) in meta {
                writeln!(out, "# {k}: {v}").expect("string write");
            }
            writeln!(out, "{}", REPORT_COLUMNS.join(",")).expect("string write");
            for r in sorted {
                writeln!(out, "{}", cells(r).join(",")).expect("string write");
            }
        }
        ReportFormat::Markdown => {
            for (k, v) in meta {
                writeln!(out, "- {k}: {v}").expect("string write");
            }
            if !meta.is_empty() {
                out.push('\n');
            }
            writeln!(out, "| {} |", REPORT_COLUMNS.join(" | ")).expect("string write");
            writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len())).expect("string write");
            for r in sorted {
                writeln!(out, "| {} |", cells(r).join(" | ")).expect("string write");
            }
        }
    }
    Ok(out.into_bytes())
}

/// Report over persisted records.
pub fn report_from_records(records: &[RunRecord], format: ReportFormat) -> Result<Vec<u8>> {
    emit_report(&aggregate_rows(records), &report_meta(records), format)
}

/// A grid of (molecule, optimizer) scans sharing one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSuite {
    pub molecules: Vec<String>,
    pub optimizers: Vec<Method>,
    /// Directory holding one sub-directory per molecule; bundled fixtures when unset.
    pub fixtures: Option<PathBuf>,
    /// Optional per-molecule grid subsets (Å).
    pub grids: BTreeMap<String, Vec<f64>>,
    /// Per-molecule dipole windows overriding the defaults.
    pub dipole_windows: BTreeMap<String, (f64, f64)>,
    pub scan: ScanConfig,
}

impl Default for BenchSuite {
    fn default() -> Self {
        BenchSuite {
            molecules: vec!["h2".into()],
            optimizers: vec![Method::Cg, Method::Lbfgs, Method::Powell, Method::Cobyla],
            fixtures: None,
            grids: BTreeMap::new(),
            dipole_windows: BTreeMap::new(),
            scan: ScanConfig::default(),
        }
    }
}

impl BenchSuite {
    pub fn load_series(&self, molecule: &str) -> Result<GeometrySeries> {
        let series = match &self.fixtures {
            Some(dir) => GeometrySeries::load_dir(&dir.join(molecule))?,
            None => bundled_series(molecule)?,
        };
        match self.grids.get(molecule) {
            Some(grid) => series.subset(grid),
            None => Ok(series),
        }
    }

    pub fn dipole_window(&self, molecule: &str) -> Option<(f64, f64)> {
        self.dipole_windows.get(molecule).copied().or_else(|| default_dipole_window(molecule))
    }
}

/// Runs every (molecule, optimizer) pair in order.
pub fn run_suite(suite: &BenchSuite) -> Result<Vec<RunRecord>> {
    if suite.molecules.is_empty() || suite.optimizers.is_empty() {
        return Err(Error::Domain("suite needs at least one molecule and one optimizer".into()));
    }
    let mut out = Vec::new();
    for molecule in &suite.molecules {
        let series = suite.load_series(molecule)?;
        for &method in &suite.optimizers {
            let cfg = ScanConfig { method, ..suite.scan.clone() };
            let scan = scan_curve(&series, &cfg)?;
            let metrics = compute_metrics(&scan, suite.dipole_window(molecule))?;
            out.push(RunRecord { scan, metrics });
        }
    }
    Ok(out)
}
