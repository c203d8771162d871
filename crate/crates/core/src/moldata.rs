//! Molecular integral datasets and second-quantized operator assembly.
//!
//! Two-electron integrals are held in physicists' order,
//! `h2[p,q,r,s] = ∫∫ φp*(1) φq*(2) φr(1) φs(2) / r12`, which is the chemists'
//! `(pr|qs)`. The FCIDUMP reader transposes on ingest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fermion::{map_operator, FermionOperator, Ladder, Mapping};
use crate::pauli::{op_sum, QubitOperator};

pub const SCHEMA_VERSION: &str = "moldata/1";

/// Tolerance for the integral symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleIntegrals {
    /// Per-axis `n_spatial²` row-major matrices of `<p|r|q>` (e·a₀).
    pub axes: [Vec<f64>; 3],
    /// Nuclear dipole plus any frozen-core electronic contribution (e·a₀).
    pub nuclear: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolecularData {
    pub name: String,
    /// Bond length or symmetric-stretch parameter, Å.
    pub geometry_param: f64,
    pub n_spatial: usize,
    pub n_electrons: usize,
    pub core_energy: f64,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub dipole: Option<DipoleIntegrals>,
    pub hf_energy: Option<f64>,
    /// Active-space full-CI reference written by the generator, if any.
    pub fci_energy: Option<f64>,
    pub fci_dipole: Option<[f64; 3]>,
    pub metadata: BTreeMap<String, Value>,
}

impl MolecularData {
    pub fn n_modes(&self) -> usize {
        2 * self.n_spatial
    }

    #[inline]
    pub fn one_body(&self, p: usize, q: usize) -> f64 {
        self.h1[p * self.n_spatial + q]
    }

    #[inline]
    pub fn two_body(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_spatial;
        self.h2[((p * n + q) * n + r) * n + s]
    }

    /// Validates every invariant; constructors call this before returning.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_spatial;
        if n == 0 {
            return Err(Error::Schema("n_spatial must be positive".into()));
        }
        if n > 32 {
            return Err(Error::Schema(format!("n_spatial {n} exceeds 32")));
        }
        if self.n_electrons > 2 * n {
            return Err(Error::Schema(format!(
                "{} electrons exceed {} spin orbitals",
                self.n_electrons,
                2 * n
            )));
        }
        check_len("h1", &self.h1, n * n)?;
        check_len("h2", &self.h2, n * n * n * n)?;
        check_finite("core_energy", std::slice::from_ref(&self.core_energy))?;
        check_finite("geometry_param_angstrom", std::slice::from_ref(&self.geometry_param))?;
        check_finite("h1", &self.h1)?;
        check_finite("h2", &self.h2)?;
        if let Some(e) = self.hf_energy {
            check_finite("hf_energy", &[e])?;
        }
        if let Some(d) = &self.dipole {
            for (k, name) in ["dipole.x", "dipole.y", "dipole.z"].iter().enumerate() {
                check_len(name, &d.axes[k], n * n)?;
                check_finite(name, &d.axes[k])?;
                check_symmetric(name, &d.axes[k], n)?;
            }
            check_finite("dipole.nuclear", &d.nuclear)?;
        }
        check_symmetric("h1", &self.h1, n)?;
        let mut worst = 0.0f64;
        let chem = |a: usize, b: usize, c: usize, d: usize| self.two_body(a, c, b, d);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = chem(a, b, c, d);
                        for w in [
                            chem(b, a, c, d),
                            chem(a, b, d, c),
                            chem(c, d, a, b),
                        ] {
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        if worst > SYMMETRY_TOL {
            return Err(Error::Symmetry(format!(
                "h2 violates 8-fold index symmetry by {worst:.3e}"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut obj = serde_json::Map::new();
        obj.insert("version".into(), SCHEMA_VERSION.into());
        obj.insert("name".into(), self.name.clone().into());
        obj.insert("geometry_param_angstrom".into(), self.geometry_param.into());
        obj.insert("n_spatial".into(), self.n_spatial.into());
        obj.insert("n_electrons".into(), self.n_electrons.into());
        obj.insert("core_energy".into(), self.core_energy.into());
        obj.insert("hf_energy".into(), self.hf_energy.map_or(Value::Null, Value::from));
        obj.insert("h1".into(), self.h1.clone().into());
        obj.insert("h2".into(), self.h2.clone().into());
        if let Some(d) = &self.dipole {
            let mut dip = serde_json::Map::new();
            for (k, axis) in ["x", "y", "z"].iter().enumerate() {
                dip.insert((*axis).into(), d.axes[k].clone().into());
            }
            dip.insert("nuclear".into(), d.nuclear.to_vec().into());
            obj.insert("dipole".into(), dip.into());
        }
        if let Some(e) = self.fci_energy {
            obj.insert("fci_energy".into(), e.into());
        }
        if let Some(d) = self.fci_dipole {
            obj.insert("fci_dipole".into(), d.to_vec().into());
        }
        if !self.metadata.is_empty() {
            obj.insert("metadata".into(), Value::Object(self.metadata.clone().into_iter().collect()));
        }
        Ok(serde_json::to_string(&Value::Object(obj))?)
    }
}

fn check_len(field: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::Schema(format!("{field} has {} entries, expected {want}", v.len())));
    }
    Ok(())
}

fn check_finite(field: &str, v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{field}[{i}]")));
    }
    Ok(())
}

fn check_symmetric(field: &str, m: &[f64], n: usize) -> Result<()> {
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in 0..p {
            worst = worst.max((m[p * n + q] - m[q * n + p]).abs());
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::Symmetry(format!("{field} asymmetric by {worst:.3e}")));
    }
    Ok(())
}

/// Flattens nested JSON arrays of numbers. Accepts `"NaN"`/`"Infinity"` strings
/// so that they surface as non-finite diagnostics instead of syntax errors.
fn flatten_numbers(field: &str, v: &Value, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Array(items) => {
            for it in items {
                flatten_numbers(field, it, out)?;
            }
            Ok(())
        }
        Value::Number(n) => {
            out.push(n.as_f64().ok_or_else(|| Error::Schema(format!("{field}: bad number")))?);
            Ok(())
        }
        Value::String(s) => match s.as_str() {
            "NaN" | "nan" => Err(Error::NonFinite(field.into())),
            "Infinity" | "-Infinity" | "inf" | "-inf" => Err(Error::NonFinite(field.into())),
            _ => Err(Error::Schema(format!("{field}: expected numbers, found string"))),
        },
        _ => Err(Error::Schema(format!("{field}: expected numeric array"))),
    }
}

fn numbers(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Vec<f64>> {
    let v = obj.get(key).ok_or_else(|| Error::Schema(format!("missing key {key:?}")))?;
    let mut out = Vec::new();
    flatten_numbers(key, v, &mut out)?;
    Ok(out)
}

fn number(obj: &serde_json::Map<String, Value>, key: &str) -> Result<f64> {
    match obj.get(key) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| Error::Schema(format!("{key}: bad number"))),
        Some(Value::String(s)) if s.eq_ignore_ascii_case("nan") || s.contains("Infinity") => {
            Err(Error::NonFinite(key.into()))
        }
        Some(_) => Err(Error::Schema(format!("{key} must be a number"))),
        None => Err(Error::Schema(format!("missing key {key:?}"))),
    }
}

fn count(obj: &serde_json::Map<String, Value>, key: &str) -> Result<usize> {
    obj.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Schema(format!("{key} must be a non-negative integer")))
}

fn parse_json(text: &str) -> Result<MolecularData> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::Schema("top level must be an object".into()))?;
    match obj.get("version").and_then(Value::as_str) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(Error::Schema(format!("unsupported version {other:?}"))),
        None => return Err(Error::Schema("missing version field".into())),
    }
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Schema("missing name".into()))?
        .to_string();
    let hf_energy = match obj.get("hf_energy") {
        None | Some(Value::Null) => None,
        Some(_) => Some(number(obj, "hf_energy")?),
    };
    let fci_energy = match obj.get("fci_energy") {
        None | Some(Value::Null) => None,
        Some(_) => Some(number(obj, "fci_energy")?),
    };
    let fci_dipole = match obj.get("fci_dipole") {
        None | Some(Value::Null) => None,
        Some(_) => {
            let v = numbers(obj, "fci_dipole")?;
            Some(<[f64; 3]>::try_from(v.as_slice()).map_err(|_| Error::Schema("fci_dipole needs 3 entries".into()))?)
        }
    };
    let dipole = match obj.get("dipole") {
        None | Some(Value::Null) => None,
        Some(Value::Object(d)) => {
            let nuclear = numbers(d, "nuclear")?;
            let nuclear = <[f64; 3]>::try_from(nuclear.as_slice())
                .map_err(|_| Error::Schema("dipole.nuclear needs 3 entries".into()))?;
            Some(DipoleIntegrals {
                axes: [numbers(d, "x")?, numbers(d, "y")?, numbers(d, "z")?],
                nuclear,
            })
        }
        Some(_) => return Err(Error::Schema("dipole must be an object".into())),
    };
    let metadata = match obj.get("metadata") {
        Some(Value::Object(m)) => m.clone().into_iter().collect(),
        _ => BTreeMap::new(),
    };
    let data = MolecularData {
        name,
        geometry_param: number(obj, "geometry_param_angstrom")?,
        n_spatial: count(obj, "n_spatial")?,
        n_electrons: count(obj, "n_electrons")?,
        core_energy: number(obj, "core_energy")?,
        h1: numbers(obj, "h1")?,
        h2: numbers(obj, "h2")?,
        dipole,
        hf_energy,
        fci_energy,
        fci_dipole,
        metadata,
    };
    data.validate()?;
    Ok(data)
}

fn parse_fortran_float(tok: &str) -> Result<f64> {
    tok.replace(['D', 'd'], "E")
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number {tok:?}: {e}")))
}

fn header_value(header: &str, key: &str) -> Option<usize> {
    let upper = header.to_ascii_uppercase();
    let start = upper.find(&format!("{key}="))? + key.len() + 1;
    let rest = &upper[start..];
    let digits: String = rest.trim_start().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// FCIDUMP subset: `&FCI NORB, NELEC` header, chemists' 1-based records,
/// `0 0 0 0` is the core energy. No dipole block.
fn parse_fcidump(text: &str) -> Result<MolecularData> {
    let mut header = String::new();
    let mut lines = text.lines();
    for line in lines.by_ref() {
        header.push_str(line);
        header.push(' ');
        let t = line.trim();
        if t.ends_with("&END") || t == "/" || t.ends_with('/') || t.eq_ignore_ascii_case("&end") {
            break;
        }
    }
    let n = header_value(&header, "NORB").ok_or_else(|| Error::Schema("FCIDUMP header lacks NORB".into()))?;
    let nelec = header_value(&header, "NELEC").ok_or_else(|| Error::Schema("FCIDUMP header lacks NELEC".into()))?;
    if n == 0 || n > 32 {
        return Err(Error::Schema(format!("NORB {n} out of range")));
    }
    let mut h1: Vec<Option<f64>> = vec![None; n * n];
    let mut h2: Vec<Option<f64>> = vec![None; n * n * n * n];
    let mut core = 0.0;
    let put = |slot: &mut Option<f64>, v: f64, what: &str| -> Result<()> {
        match slot {
            Some(old) if (*old - v).abs() > SYMMETRY_TOL => Err(Error::Symmetry(format!(
                "{what}: conflicting values {old} and {v}"
            ))),
            _ => {
                *slot = Some(v);
                Ok(())
            }
        }
    };
    for (lineno, line) in lines.enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 {
            return Err(Error::Schema(format!("FCIDUMP record {}: expected 5 fields", lineno + 1)));
        }
        let v = parse_fortran_float(toks[0])?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("FCIDUMP record {}", lineno + 1)));
        }
        let idx: Vec<usize> = toks[1..]
            .iter()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("index {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if idx.iter().any(|&i| i > n) {
            return Err(Error::Schema(format!("FCIDUMP record {}: index exceeds NORB", lineno + 1)));
        }
        match (idx[0], idx[1], idx[2], idx[3]) {
            (0, 0, 0, 0) => core = v,
            (i, j, 0, 0) if i > 0 && j > 0 => {
                let (i, j) = (i - 1, j - 1);
                put(&mut h1[i * n + j], v, "h1")?;
                put(&mut h1[j * n + i], v, "h1")?;
            }
            (i, j, k, l) if i > 0 && j > 0 && k > 0 && l > 0 => {
                let (i, j, k, l) = (i - 1, j - 1, k - 1, l - 1);
                for (a, b, c, d) in [
                    (i, j, k, l),
                    (j, i, k, l),
                    (i, j, l, k),
                    (j, i, l, k),
                    (k, l, i, j),
                    (l, k, i, j),
                    (k, l, j, i),
                    (l, k, j, i),
                ] {
                    // (ab|cd) -> physicists [a, c, b, d]
                    put(&mut h2[((a * n + c) * n + b) * n + d], v, "h2")?;
                }
            }
            // orbital energies and other records are not used
            _ => {}
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("source".to_string(), Value::from("fcidump"));
    let data = MolecularData {
        name: "FCIDUMP".into(),
        geometry_param: 0.0,
        n_spatial: n,
        n_electrons: nelec,
        core_energy: core,
        h1: h1.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
        h2: h2.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
        dipole: None,
        hf_energy: None,
        fci_energy: None,
        fci_dipole: None,
        metadata,
    };
    data.validate()?;
    Ok(data)
}

/// Parses either the `moldata/1` JSON schema or an FCIDUMP file.
pub fn parse_moldata(bytes: &[u8]) -> Result<MolecularData> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Schema(format!("not UTF-8: {e}")))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        parse_json(trimmed)
    } else if trimmed.to_ascii_uppercase().starts_with("&FCI") {
        parse_fcidump(trimmed)
    } else {
        Err(Error::Schema("unrecognized format (expected moldata JSON or FCIDUMP)".into()))
    }
}

pub fn load_moldata(path: &Path) -> Result<MolecularData> {
    parse_moldata(&fs::read(path)?)
}

/// Spin-orbital operator `Σ h_pq a†p aq + ½ Σ h_pqrs a†p a†q as ar` (no constant).
pub fn electronic_fermion_operator(m: &MolecularData) -> Result<FermionOperator> {
    let n = m.n_spatial;
    let mut f = FermionOperator::new(2 * n);
    let so = |p: usize, spin: usize| p + spin * n;
    for spin in 0..2 {
        for p in 0..n {
            for q in 0..n {
                let h = m.one_body(p, q);
                if h != 0.0 {
                    f.add_real(h, &[Ladder::create(so(p, spin)), Ladder::annihilate(so(q, spin))])?;
                }
            }
        }
    }
    for s1 in 0..2 {
        for s2 in 0..2 {
            for p in 0..n {
                for q in 0..n {
                    if s1 == s2 && p == q {
                        continue;
                    }
                    for r in 0..n {
                        for s in 0..n {
                            if s1 == s2 && r == s {
                                continue;
                            }
                            let h = m.two_body(p, q, r, s);
                            if h == 0.0 {
                                continue;
                            }
                            f.add_real(
                                0.5 * h,
                                &[
                                    Ladder::create(so(p, s1)),
                                    Ladder::create(so(q, s2)),
                                    Ladder::annihilate(so(s, s2)),
                                    Ladder::annihilate(so(r, s1)),
                                ],
                            )?;
                        }
                    }
                }
            }
        }
    }
    Ok(f)
}

fn finish_real(op: QubitOperator, what: &str) -> Result<QubitOperator> {
    if op.max_imag() > 1e-10 {
        return Err(Error::Numeric(format!(
            "{what} has imaginary coefficient {:.3e}",
            op.max_imag()
        )));
    }
    Ok(op.real_part())
}

/// Qubit Hamiltonian including `core_energy` on the identity string.
pub fn build_hamiltonian(m: &MolecularData, mapping: Mapping) -> Result<QubitOperator> {
    let f = electronic_fermion_operator(m)?;
    let mapped = map_operator(&f, mapping, m.n_electrons)?;
    let core = QubitOperator::identity(mapped.n_qubits(), m.core_energy);
    finish_real(op_sum(&[mapped, core])?, "hamiltonian")
}

/// Dipole component `-Σ d_pq a†p aq + μ_nuc` along `axis`.
pub fn build_dipole(m: &MolecularData, mapping: Mapping, axis: Axis) -> Result<QubitOperator> {
    let d = m
        .dipole
        .as_ref()
        .ok_or_else(|| Error::UnsupportedMetric(format!("{} has no dipole integrals", m.name)))?;
    let n = m.n_spatial;
    let ints = &d.axes[axis.index()];
    let mut f = FermionOperator::new(2 * n);
    for spin in 0..2 {
        for p in 0..n {
            for q in 0..n {
                let v = ints[p * n + q];
                if v != 0.0 {
                    f.add_term(
                        Complex64::new(-v, 0.0),
                        vec![Ladder::create(p + spin * n), Ladder::annihilate(q + spin * n)],
                    )?;
                }
            }
        }
    }
    let n_qubits = mapping.n_qubits(2 * n);
    let nuclear = QubitOperator::identity(n_qubits, d.nuclear[axis.index()]);
    if f.terms().is_empty() {
        return Ok(nuclear);
    }
    let mapped = map_operator(&f, mapping, m.n_electrons)?;
    finish_real(op_sum(&[mapped, nuclear])?, "dipole")
}

/// Scan over one molecule, strictly increasing in geometry.
#[derive(Debug, Clone)]
pub struct GeometrySeries {
    points: Vec<MolecularData>,
}

impl GeometrySeries {
    pub fn new(mut points: Vec<MolecularData>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("empty geometry series".into()));
        }
        points.sort_by(|a, b| a.geometry_param.total_cmp(&b.geometry_param));
        let first = &points[0];
        for w in points.windows(2) {
            if w[1].geometry_param <= w[0].geometry_param {
                return Err(Error::Domain(format!(
                    "duplicate geometry {} in series",
                    w[1].geometry_param
                )));
            }
        }
        for p in &points {
            if p.name != first.name || p.n_spatial != first.n_spatial || p.n_electrons != first.n_electrons {
                return Err(Error::Domain(format!(
                    "series mixes {} ({} orbitals) with {} ({} orbitals)",
                    first.name, first.n_spatial, p.name, p.n_spatial
                )));
            }
        }
        Ok(GeometrySeries { points })
    }

    /// Loads every `*.json` or `FCIDUMP*` file in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && (p.extension().is_some_and(|e| e == "json")
                        || p.file_name().is_some_and(|n| n.to_string_lossy().to_uppercase().starts_with("FCIDUMP")))
            })
            .collect();
        paths.sort();
        let points = paths.iter().map(|p| load_moldata(p)).collect::<Result<Vec<_>>>()?;
        GeometrySeries::new(points)
    }

    pub fn points(&self) -> &[MolecularData] {
        &self.points
    }

    pub fn name(&self) -> &str {
        &self.points[0].name
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps only the grid points whose geometry matches one of `params` (to 1e-9 Å).
    pub fn subset(&self, params: &[f64]) -> Result<Self> {
        let picked: Vec<MolecularData> = self
            .points
            .iter()
            .filter(|p| params.iter().any(|g| (g - p.geometry_param).abs() < 1e-9))
            .cloned()
            .collect();
        if picked.len() != params.len() {
            return Err(Error::Domain(format!(
                "requested {} geometries, {} present in {} series",
                params.len(),
                picked.len(),
                self.name()
            )));
        }
        GeometrySeries::new(picked)
    }
}

/// Directory of the fixtures shipped with this crate.
pub fn bundled_fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Loads a bundled series by directory name (`h2`, `lih`, `beh2`, `h2o`, `hf`).
pub fn bundled_series(name: &str) -> Result<GeometrySeries> {
    GeometrySeries::load_dir(&bundled_fixtures_dir().join(name))
}
