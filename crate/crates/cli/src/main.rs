//! `vqebench` command-line driver.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vqebench::bench::{
    compute_metrics, load_records, report_from_records, run_suite, save_records, scan_curve, BenchSuite, Metrics,
    ReportFormat, ScanConfig, ScanResult,
};
use vqebench::fermion::Mapping;
use vqebench::moldata::{build_hamiltonian, bundled_series, load_moldata, GeometrySeries};
use vqebench::vqe::{vqe_minimize, VqeProblem, VqeResult};
use vqebench::Error;

use config::{AnsatzValue, Settings};

#[derive(Parser)]
#[command(name = "vqebench", version, about = "Benchmark classical optimizers inside molecular VQE")]
struct Cli {
    /// TOML file supplying any flag; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the qubit Hamiltonian of a molecule file
    Hamiltonian {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one VQE minimization
    Vqe {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan a geometry series (a directory, or a bundled name such as `h2`)
    Scan {
        #[arg(long)]
        series: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark suite and write per-run records plus reports
    Bench {
        #[arg(long)]
        suite: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate saved run records
    Report {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// csv or md
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunFlags {
    /// jw or parity-reduced
    #[arg(long)]
    mapping: Option<String>,
    /// uccsd, twolocal or twolocal:<linear|full>:<reps>
    #[arg(long)]
    ansatz: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    /// statevector or sampled
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    shots: Option<u64>,
    /// Noise profile JSON
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_evaluations: Option<usize>,
    #[arg(long)]
    averaging: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// x, y or z
    #[arg(long)]
    dipole_axis: Option<String>,
}

impl RunFlags {
    fn into_settings(self) -> Settings {
        Settings {
            mapping: self.mapping,
            ansatz: self.ansatz.map(AnsatzValue::Name),
            optimizer: self.optimizer,
            backend: self.backend,
            shots: self.shots,
            noise: self.noise,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            max_evaluations: self.max_evaluations,
            averaging: self.averaging,
            threads: self.threads,
            dipole_axis: self.dipole_axis,
            ..Default::default()
        }
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(Error::from).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes).map_err(Error::from)?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v).map_err(Error::from)? + "\n").into_bytes())
}

/// Scan settings with every provided field applied over `base`.
fn scan_config(s: &Settings, base: ScanConfig) -> Result<ScanConfig> {
    Ok(ScanConfig {
        mapping: s.mapping()?.unwrap_or(base.mapping),
        ansatz: s.ansatz()?.unwrap_or(base.ansatz),
        method: s.method()?.unwrap_or(base.method),
        optimizer: s.optimizer_options(base.optimizer),
        backend: s.backend()?.unwrap_or(base.backend),
        seed: s.seed.unwrap_or(base.seed),
        averaging: s.averaging.unwrap_or(base.averaging),
        dipole_axis: s.dipole_axis()?.unwrap_or(base.dipole_axis),
        threads: s.threads.or(base.threads),
    })
}

#[derive(Serialize)]
struct VqeOutput<'a> {
    molecule: &'a str,
    geometry_param: f64,
    exact_energy: f64,
    result: VqeResult,
}

#[derive(Serialize)]
struct ScanOutput {
    scan: ScanResult,
    /// Absent when the grid lacks the dissociated point.
    metrics: Option<Metrics>,
}

fn load_series(path: &Path) -> Result<GeometrySeries> {
    if !path.exists() {
        if let Some(name) = path.to_str().filter(|n| !n.contains(['/', '\\'])) {
            return Ok(bundled_series(&name.to_ascii_lowercase())?);
        }
    }
    Ok(GeometrySeries::load_dir(path)?)
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Hamiltonian { data, mapping, out } => {
            let s = Settings { data, mapping, out, ..Default::default() }.or(file);
            let m = load_moldata(s.require(&s.data, "data")?)?;
            let h = build_hamiltonian(&m, s.mapping()?.unwrap_or(Mapping::ParityReduced))?;
            write_output(s.out.as_deref(), h.to_text().as_bytes())
        }
        Command::Vqe { data, run, out } => {
            let s = Settings { data, out, ..run.into_settings() }.or(file);
            let m = load_moldata(s.require(&s.data, "data")?)?;
            let cfg = scan_config(&s, ScanConfig::default())?;
            let p = VqeProblem::from_molecule(&m, cfg.mapping, cfg.ansatz, cfg.backend, cfg.seed)?;
            let result = vqe_minimize(&p, cfg.method, &cfg.optimizer)?;
            let exact_energy = p.exact()?.energy;
            let report = VqeOutput { molecule: &m.name, geometry_param: m.geometry_param, exact_energy, result };
            write_output(s.out.as_deref(), &to_json(&report)?)
        }
        Command::Scan { series, run, out } => {
            let s = Settings { series, out, ..run.into_settings() }.or(file);
            let series = load_series(s.require(&s.series, "series")?)?;
            let scan = scan_curve(&series, &scan_config(&s, ScanConfig::default())?)?;
            let window = vqebench::bench::default_dipole_window(series.name());
            let metrics = match compute_metrics(&scan, window) {
                Ok(m) => Some(m),
                Err(e @ (Error::Domain(_) | Error::UnsupportedMetric(_))) => {
                    eprintln!("metrics skipped: {e}");
                    None
                }
                Err(e) => return Err(e.into()),
            };
            write_output(s.out.as_deref(), &to_json(&ScanOutput { scan, metrics })?)
        }
        Command::Bench { suite, run, out } => {
            let s = Settings { suite, out, ..run.into_settings() }.or(file);
            let mut suite: BenchSuite = match &s.suite {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(Error::from).with_context(|| format!("reading {}", p.display()))?;
                    let mut b: BenchSuite =
                        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                    if let Some(dir) = b.fixtures.as_mut().filter(|d| d.is_relative()) {
                        *dir = p.parent().unwrap_or(Path::new(".")).join(&*dir);
                    }
                    b
                }
                None => BenchSuite::default(),
            };
            if let Some(m) = s.method()? {
                suite.optimizers = vec![m];
            }
            suite.scan = scan_config(&s, suite.scan)?;
            let out = s.require(&s.out, "out")?;
            let records = run_suite(&suite)?;
            save_records(&records, out)?;
            let csv = report_from_records(&records, ReportFormat::Csv)?;
            std::fs::write(out.join("report.csv"), &csv).map_err(Error::from)?;
            std::fs::write(out.join("report.md"), report_from_records(&records, ReportFormat::Markdown)?)
                .map_err(Error::from)?;
            write_output(None, &csv)
        }
        Command::Report { input, format, out } => {
            let s = Settings { input, format, out, ..Default::default() }.or(file);
            let records = load_records(s.require(&s.input, "in")?)?;
            let format: ReportFormat = s.format.as_deref().unwrap_or("csv").parse()?;
            write_output(s.out.as_deref(), &report_from_records(&records, format)?)
        }
    }
}

/// 2 for bad input, 3 when the numerics fail.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if !err.is_input_error() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
