//! Layered settings: command-line flags over the `--config` file over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use vqebench::ansatz::{AnsatzSpec, TwoLocalSpec};
use vqebench::backend::{BackendConfig, NoiseProfile, DEFAULT_SHOTS};
use vqebench::fermion::Mapping;
use vqebench::moldata::Axis;
use vqebench::optim::{Method, OptimizerOptions};
use vqebench::Error;

/// `ansatz = "uccsd"` or an inline TwoLocal table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AnsatzValue {
    Name(String),
    TwoLocal(TwoLocalSpec),
}

/// Every flag, as it may appear in the config file. Keys use the flag name
/// with `_` for `-`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub mapping: Option<String>,
    pub ansatz: Option<AnsatzValue>,
    pub optimizer: Option<String>,
    pub backend: Option<String>,
    pub shots: Option<u64>,
    pub noise: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub max_evaluations: Option<usize>,
    pub averaging: Option<usize>,
    pub threads: Option<usize>,
    pub dipole_axis: Option<String>,
    /// Per-method hyperparameter tables, e.g. `[optimizers.spsa]`.
    pub optimizers: Option<OptimizerOptions>,
}

fn input_error(msg: String) -> anyhow::Error {
    Error::Parse(msg).into()
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
        let mut s: Settings = toml::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        // paths in a config file are relative to the file itself
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut s.data, &mut s.series, &mut s.suite, &mut s.input, &mut s.out, &mut s.noise].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Fills every unset field from `lower`.
    pub fn or(self, lower: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            data, series, suite, input, out, format, mapping, ansatz, optimizer, backend, shots, noise, seed,
            max_iter, tol, max_evaluations, averaging, threads, dipole_axis, optimizers
        )
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, flag: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| input_error(format!("missing --{flag} (flag or config key)")))
    }

    pub fn mapping(&self) -> Result<Option<Mapping>> {
        Ok(self.mapping.as_deref().map(str::parse).transpose()?)
    }

    pub fn ansatz(&self) -> Result<Option<AnsatzSpec>> {
        Ok(match &self.ansatz {
            None => None,
            Some(AnsatzValue::Name(s)) => Some(s.parse()?),
            Some(AnsatzValue::TwoLocal(t)) => Some(AnsatzSpec::TwoLocal(t.clone())),
        })
    }

    pub fn method(&self) -> Result<Option<Method>> {
        Ok(self.optimizer.as_deref().map(str::parse).transpose()?)
    }

    pub fn dipole_axis(&self) -> Result<Option<Axis>> {
        self.dipole_axis
            .as_deref()
            .map(|a| match a.to_ascii_lowercase().as_str() {
                "x" => Ok(Axis::X),
                "y" => Ok(Axis::Y),
                "z" => Ok(Axis::Z),
                _ => Err(input_error(format!("unknown dipole axis {a:?}"))),
            })
            .transpose()
    }

    /// Backend from `backend`, `shots` and `noise`. Shots or a noise file
    /// alone imply the sampled backend.
    pub fn backend(&self) -> Result<Option<BackendConfig>> {
        let noise = match &self.noise {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::from).with_context(|| format!("reading {}", p.display()))?;
                Some(NoiseProfile::from_json(&text)?)
            }
            None => None,
        };
        let sampled = || BackendConfig::Sampled { shots: self.shots.unwrap_or(DEFAULT_SHOTS), noise: noise.clone() };
        Ok(match self.backend.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None if self.shots.is_some() || noise.is_some() => Some(sampled()),
            None => None,
            Some("statevector") => {
                if self.shots.is_some() || noise.is_some() {
                    bail!(input_error("--shots and --noise need --backend sampled".into()));
                }
                Some(BackendConfig::Statevector)
            }
            Some("sampled") => Some(sampled()),
            Some(other) => bail!(input_error(format!("unknown backend {other:?}"))),
        })
    }

    /// Optimizer options with the scalar flags applied over `base`.
    pub fn optimizer_options(&self, base: OptimizerOptions) -> OptimizerOptions {
        let mut o = self.optimizers.clone().unwrap_or(base);
        if self.max_iter.is_some() {
            o.max_iter = self.max_iter;
        }
        if let Some(t) = self.tol {
            o.tol = t;
        }
        if self.max_evaluations.is_some() {
            o.max_evaluations = self.max_evaluations;
        }
        o
    }
}
