//! Circuits, ideal statevector execution and shot sampling with optional
//! depolarizing and readout noise.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString, QubitOperator};
use crate::rng::{derive_seed, rng_for};

/// Largest register the statevector simulator accepts.
pub const MAX_STATEVECTOR_QUBITS: usize = 20;

/// Shot count used when none is given.
pub const DEFAULT_SHOTS: u64 = 8192;

const NORM_TOL: f64 = 1e-10;

/// A rotation angle, either fixed or `scale * params[index]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Const(f64),
    Slot { index: usize, scale: f64 },
}

impl Angle {
    pub fn slot(index: usize) -> Self {
        Angle::Slot { index, scale: 1.0 }
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        match *self {
            Angle::Const(v) => v,
            Angle::Slot { index, scale } => scale * params[index],
        }
    }

    pub fn slot_index(&self) -> Option<(usize, f64)> {
        match *self {
            Angle::Const(_) => None,
            Angle::Slot { index, scale } => Some((index, scale)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Rx(usize, Angle),
    Ry(usize, Angle),
    Rz(usize, Angle),
    Cnot { control: usize, target: usize },
    Cz(usize, usize),
    /// `exp(-i θ/2 P)`.
    PauliRotation(PauliString, Angle),
}

impl Gate {
    pub fn angle(&self) -> Option<Angle> {
        match self {
            Gate::Rx(_, a) | Gate::Ry(_, a) | Gate::Rz(_, a) | Gate::PauliRotation(_, a) => Some(*a),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::H(_) => "h",
            Gate::X(_) => "x",
            Gate::Rx(..) => "rx",
            Gate::Ry(..) => "ry",
            Gate::Rz(..) => "rz",
            Gate::Cnot { .. } => "cx",
            Gate::Cz(..) => "cz",
            Gate::PauliRotation(..) => "pauli_rot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    n_params: usize,
    initial_state: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize, n_params: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Dimension("circuit needs at least one qubit".into()));
        }
        if n_qubits > MAX_STATEVECTOR_QUBITS {
            return Err(Error::Resource(format!(
                "{n_qubits} qubits exceeds the simulator limit of {MAX_STATEVECTOR_QUBITS}"
            )));
        }
        Ok(Circuit { n_qubits, n_params, initial_state: 0, gates: Vec::new() })
    }

    /// Starts from computational basis state `index` instead of |0…0⟩.
    pub fn with_initial_state(mut self, index: usize) -> Result<Self> {
        if index >> self.n_qubits != 0 {
            return Err(Error::Dimension(format!("basis index {index} out of range")));
        }
        self.initial_state = index;
        Ok(self)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let n = self.n_qubits;
        let check = |q: usize| -> Result<()> {
            if q >= n {
                Err(Error::Dimension(format!("qubit {q} out of range for {n}-qubit circuit")))
            } else {
                Ok(())
            }
        };
        match &gate {
            Gate::H(q) | Gate::X(q) | Gate::Rx(q, _) | Gate::Ry(q, _) | Gate::Rz(q, _) => check(*q)?,
            Gate::Cnot { control: a, target: b } | Gate::Cz(a, b) => {
                check(*a)?;
                check(*b)?;
                if a == b {
                    return Err(Error::Dimension("two-qubit gate on a single qubit".into()));
                }
            }
            Gate::PauliRotation(p, _) => {
                if p.n_qubits() != n {
                    return Err(Error::Dimension(format!(
                        "Pauli string of width {} in {n}-qubit circuit",
                        p.n_qubits()
                    )));
                }
            }
        }
        if let Some((index, _)) = gate.angle().and_then(|a| a.slot_index()) {
            if index >= self.n_params {
                return Err(Error::Dimension(format!(
                    "parameter slot {index} but circuit has {} parameters",
                    self.n_params
                )));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// `(gate index, parameter slot, prefactor)` for each parameterized gate.
    pub fn parameterized_gates(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.gates
            .iter()
            .enumerate()
            .filter_map(|(g, gate)| gate.angle().and_then(|a| a.slot_index()).map(|(s, k)| (g, s, k)))
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::Dimension(format!(
                "circuit takes {} parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("circuit parameters".into()));
        }
        Ok(())
    }

    /// Resolved angle of every gate, with an optional offset on one gate.
    fn angles(&self, params: &[f64], shift: Option<Shift>) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .gates
            .iter()
            .map(|g| g.angle().map_or(0.0, |a| a.value(params)))
            .collect();
        if let Some(s) = shift {
            out[s.gate] += s.delta;
        }
        out
    }
}

/// Offset applied to one gate's angle, used by sub-gate shift rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub gate: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

/// Gate with a numeric angle; the unit the noisy sampler works in.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Prim {
    H(usize),
    X(usize),
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    Cnot(usize, usize),
    Cz(usize, usize),
    Pauli(usize, Pauli),
}

impl Prim {
    fn two_qubit(&self) -> Option<(usize, usize)> {
        match *self {
            Prim::Cnot(a, b) | Prim::Cz(a, b) => Some((a, b)),
            _ => None,
        }
    }

    fn qubit(&self) -> Option<usize> {
        match *self {
            Prim::H(q) | Prim::X(q) | Prim::Rx(q, _) | Prim::Ry(q, _) | Prim::Rz(q, _) => Some(q),
            _ => None,
        }
    }
}

impl Statevector {
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits > MAX_STATEVECTOR_QUBITS {
            return Err(Error::Resource(format!("{n_qubits} qubits exceeds simulator limit")));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::Dimension(format!("basis index {index} out of range")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Statevector { n_qubits, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::Dimension(format!("{dim} amplitudes is not a power of two")));
        }
        let s = Statevector { n_qubits: dim.trailing_zeros() as usize, amps };
        if (s.norm() - 1.0).abs() > NORM_TOL {
            return Err(Error::Domain(format!("state norm {} is not 1", s.norm())));
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Statevector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    /// Applies `gate` with its angle already resolved.
    pub fn apply_gate(&mut self, gate: &Gate, angle: f64) {
        match gate {
            Gate::H(q) => self.apply_prim(Prim::H(*q)),
            Gate::X(q) => self.apply_prim(Prim::X(*q)),
            Gate::Rx(q, _) => self.apply_prim(Prim::Rx(*q, angle)),
            Gate::Ry(q, _) => self.apply_prim(Prim::Ry(*q, angle)),
            Gate::Rz(q, _) => self.apply_prim(Prim::Rz(*q, angle)),
            Gate::Cnot { control, target } => self.apply_prim(Prim::Cnot(*control, *target)),
            Gate::Cz(a, b) => self.apply_prim(Prim::Cz(*a, *b)),
            Gate::PauliRotation(p, _) => self.apply_pauli_rotation(p, angle),
        }
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_prim(&mut self, g: Prim) {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match g {
            Prim::H(q) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_1q(q, [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]);
            }
            Prim::X(q) | Prim::Pauli(q, Pauli::X) => {
                let bit = 1usize << q;
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        self.amps.swap(i, i | bit);
                    }
                }
            }
            Prim::Pauli(q, Pauli::Y) => self.apply_1q(q, [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]),
            Prim::Pauli(q, Pauli::Z) => {
                let bit = 1usize << q;
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *a = -*a;
                    }
                }
            }
            Prim::Pauli(_, Pauli::I) => {}
            Prim::Rx(q, t) => {
                let (s, co) = (t / 2.0).sin_cos();
                self.apply_1q(q, [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]);
            }
            Prim::Ry(q, t) => {
                let (s, co) = (t / 2.0).sin_cos();
                self.apply_1q(q, [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]);
            }
            Prim::Rz(q, t) => {
                let bit = 1usize << q;
                let lo = Complex64::from_polar(1.0, -t / 2.0);
                let hi = Complex64::from_polar(1.0, t / 2.0);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & bit == 0 { lo } else { hi };
                }
            }
            Prim::Cnot(ctl, tgt) => {
                let (cb, tb) = (1usize << ctl, 1usize << tgt);
                for i in 0..self.amps.len() {
                    if i & cb != 0 && i & tb == 0 {
                        self.amps.swap(i, i | tb);
                    }
                }
            }
            Prim::Cz(a, b) => {
                let mask = (1usize << a) | (1usize << b);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
        }
    }

    fn apply_pauli_rotation(&mut self, p: &PauliString, theta: f64) {
        let (s, co) = (theta / 2.0).sin_cos();
        let x = p.x_mask() as usize;
        let minus_is = Complex64::new(0.0, -s);
        if x == 0 {
            for (b, a) in self.amps.iter_mut().enumerate() {
                let (ph, _) = p.apply_to_basis(b);
                *a *= co + minus_is * ph;
            }
            return;
        }
        for b in 0..self.amps.len() {
            let b2 = b ^ x;
            if b < b2 {
                let (ph1, _) = p.apply_to_basis(b);
                let (ph2, _) = p.apply_to_basis(b2);
                let a1 = self.amps[b];
                let a2 = self.amps[b2];
                self.amps[b] = co * a1 + minus_is * ph2 * a2;
                self.amps[b2] = co * a2 + minus_is * ph1 * a1;
            }
        }
    }
}

pub fn run_statevector(c: &Circuit, params: &[f64]) -> Result<Statevector> {
    run_statevector_shifted(c, params, None)
}

pub fn run_statevector_shifted(c: &Circuit, params: &[f64], shift: Option<Shift>) -> Result<Statevector> {
    c.check_params(params)?;
    let angles = c.angles(params, shift);
    let mut s = Statevector::basis(c.n_qubits, c.initial_state)?;
    for (g, a) in c.gates.iter().zip(&angles) {
        s.apply_gate(g, *a);
    }
    Ok(s)
}

/// `⟨s|P|s⟩` for a single string.
pub fn pauli_expectation(s: &Statevector, p: &PauliString) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, a) in s.amps.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let (ph, b2) = p.apply_to_basis(b);
        acc += s.amps[b2].conj() * ph * a;
    }
    acc
}

fn check_hermitian(op: &QubitOperator) -> Result<()> {
    if op.max_imag() > 1e-10 {
        return Err(Error::Domain("operator is not Hermitian".into()));
    }
    Ok(())
}

pub fn expectation_exact(s: &Statevector, op: &QubitOperator) -> Result<f64> {
    if op.n_qubits() != s.n_qubits {
        return Err(Error::Dimension(format!(
            "{}-qubit operator on {}-qubit state",
            op.n_qubits(),
            s.n_qubits
        )));
    }
    check_hermitian(op)?;
    let mut total = Complex64::new(0.0, 0.0);
    for (p, c) in op.iter() {
        total += c * pauli_expectation(s, p);
    }
    if !total.re.is_finite() {
        return Err(Error::Numeric("non-finite expectation value".into()));
    }
    Ok(total.re)
}

/// Depolarizing and readout error model.
///
/// Depolarizing with probability `p` replaces the state by a uniformly random
/// Pauli (identity included) applied to the gate's qubits, so `p = 1` fully
/// mixes them. `readout[q] = [P(read 1 | 0), P(read 0 | 1)]`; a single entry
/// applies to every qubit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
    #[serde(default)]
    pub readout: Vec<[f64; 2]>,
}

impl NoiseProfile {
    pub fn uniform(p1: f64, p2: f64, readout: f64) -> Self {
        NoiseProfile { p1, p2, readout: vec![[readout, readout]] }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let n: NoiseProfile =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("noise profile: {e}")))?;
        n.validate(None)?;
        Ok(n)
    }

    pub fn validate(&self, n_qubits: Option<usize>) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.p1) || !ok(self.p2) || self.readout.iter().flatten().any(|&p| !ok(p)) {
            return Err(Error::Domain("noise probabilities must lie in [0, 1]".into()));
        }
        if let Some(n) = n_qubits {
            if self.readout.len() > 1 && self.readout.len() != n {
                return Err(Error::Dimension(format!(
                    "readout table has {} entries for {n} qubits",
                    self.readout.len()
                )));
            }
        }
        Ok(())
    }

    fn readout_for(&self, q: usize) -> [f64; 2] {
        match self.readout.len() {
            0 => [0.0, 0.0],
            1 => self.readout[0],
            _ => self.readout[q],
        }
    }

    fn has_gate_noise(&self) -> bool {
        self.p1 > 0.0 || self.p2 > 0.0
    }

    fn has_readout_noise(&self) -> bool {
        self.readout.iter().flatten().any(|&p| p > 0.0)
    }
}

fn basis_change_pre(p: &PauliString, out: &mut Vec<Prim>) {
    for q in 0..p.n_qubits() {
        match p.get(q) {
            Pauli::X => out.push(Prim::H(q)),
            Pauli::Y => out.push(Prim::Rx(q, FRAC_PI_2)),
            _ => {}
        }
    }
}

fn basis_change_post(p: &PauliString, out: &mut Vec<Prim>) {
    for q in 0..p.n_qubits() {
        match p.get(q) {
            Pauli::X => out.push(Prim::H(q)),
            Pauli::Y => out.push(Prim::Rx(q, -FRAC_PI_2)),
            _ => {}
        }
    }
}

/// Lowers a circuit to one- and two-qubit primitives, including the X gates
/// that prepare the initial basis state. Pauli rotations become basis changes,
/// a CNOT parity ladder and a single RZ.
fn compile(c: &Circuit, angles: &[f64]) -> Vec<Prim> {
    let mut out = Vec::new();
    for q in 0..c.n_qubits {
        if c.initial_state >> q & 1 == 1 {
            out.push(Prim::X(q));
        }
    }
    for (g, &a) in c.gates.iter().zip(angles) {
        match g {
            Gate::H(q) => out.push(Prim::H(*q)),
            Gate::X(q) => out.push(Prim::X(*q)),
            Gate::Rx(q, _) => out.push(Prim::Rx(*q, a)),
            Gate::Ry(q, _) => out.push(Prim::Ry(*q, a)),
            Gate::Rz(q, _) => out.push(Prim::Rz(*q, a)),
            Gate::Cnot { control, target } => out.push(Prim::Cnot(*control, *target)),
            Gate::Cz(x, y) => out.push(Prim::Cz(*x, *y)),
            Gate::PauliRotation(p, _) => {
                let support: Vec<usize> = (0..p.n_qubits()).filter(|&q| p.get(q) != Pauli::I).collect();
                // identity string: global phase only
                let Some(&last) = support.last() else { continue };
                basis_change_pre(p, &mut out);
                for w in support.windows(2) {
                    out.push(Prim::Cnot(w[0], w[1]));
                }
                out.push(Prim::Rz(last, a));
                for w in support.windows(2).rev() {
                    out.push(Prim::Cnot(w[0], w[1]));
                }
                basis_change_post(p, &mut out);
            }
        }
    }
    out
}

/// Error sites drawn for one shot: `(prim index, Pauli on first qubit, Pauli on second)`.
type ErrorEvent = (usize, Pauli, Pauli);

const PAULIS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

/// Indices of sites that suffer a depolarizing event, by geometric skipping.
fn draw_sites(n_sites: usize, p: f64, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
    if p <= 0.0 || n_sites == 0 {
        return;
    }
    if p >= 1.0 {
        out.extend(0..n_sites);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut pos = 0usize;
    loop {
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let skip = (u.ln() / log_q).floor();
        if !skip.is_finite() || skip >= (n_sites - pos) as f64 {
            return;
        }
        pos += skip as usize;
        out.push(pos);
        pos += 1;
        if pos >= n_sites {
            return;
        }
    }
}

struct TermSampler<'a> {
    prims: Vec<Prim>,
    sites1: Vec<usize>,
    sites2: Vec<usize>,
    cdf: Vec<f64>,
    support: usize,
    noise: Option<&'a NoiseProfile>,
    n_qubits: usize,
}

impl<'a> TermSampler<'a> {
    fn new(circuit_prims: &[Prim], ideal: &Statevector, term: &PauliString, noise: Option<&'a NoiseProfile>) -> Self {
        let mut meas = Vec::new();
        basis_change_pre(term, &mut meas);
        let mut rotated = ideal.clone();
        for g in &meas {
            rotated.apply_prim(*g);
        }
        let mut acc = 0.0;
        let cdf = rotated
            .amps
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect();
        let mut prims = circuit_prims.to_vec();
        prims.extend(meas);
        let sites1 = (0..prims.len()).filter(|&i| prims[i].qubit().is_some()).collect();
        let sites2 = (0..prims.len()).filter(|&i| prims[i].two_qubit().is_some()).collect();
        TermSampler {
            prims,
            sites1,
            sites2,
            cdf,
            support: term.support() as usize,
            noise,
            n_qubits: ideal.n_qubits,
        }
    }

    fn sample_ideal(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u = rng.gen::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    fn draw_events(&self, noise: &NoiseProfile, rng: &mut ChaCha8Rng) -> Vec<ErrorEvent> {
        let mut events = Vec::new();
        let mut picked = Vec::new();
        draw_sites(self.sites1.len(), noise.p1, rng, &mut picked);
        for &k in &picked {
            let p = PAULIS[rng.gen_range(0..4)];
            if p != Pauli::I {
                events.push((self.sites1[k], p, Pauli::I));
            }
        }
        picked.clear();
        draw_sites(self.sites2.len(), noise.p2, rng, &mut picked);
        for &k in &picked {
            let r = rng.gen_range(0..16);
            let (a, b) = (PAULIS[r / 4], PAULIS[r % 4]);
            if a != Pauli::I || b != Pauli::I {
                events.push((self.sites2[k], a, b));
            }
        }
        events.sort_by_key(|e| e.0);
        events
    }

    fn sample_trajectory(&self, events: &[ErrorEvent], rng: &mut ChaCha8Rng) -> usize {
        let mut s = Statevector::basis(self.n_qubits, 0).expect("validated width");
        let mut next = 0;
        for (i, g) in self.prims.iter().enumerate() {
            s.apply_prim(*g);
            while next < events.len() && events[next].0 == i {
                let (_, pa, pb) = events[next];
                if let Some((qa, qb)) = g.two_qubit() {
                    s.apply_prim(Prim::Pauli(qa, pa));
                    s.apply_prim(Prim::Pauli(qb, pb));
                } else if let Some(q) = g.qubit() {
                    s.apply_prim(Prim::Pauli(q, pa));
                }
                next += 1;
            }
        }
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        for (b, a) in s.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                return b;
            }
        }
        s.amps.len() - 1
    }

    fn apply_readout(&self, mut bits: usize, noise: &NoiseProfile, rng: &mut ChaCha8Rng) -> usize {
        for q in 0..self.n_qubits {
            if self.support >> q & 1 == 0 {
                continue;
            }
            let [p10, p01] = noise.readout_for(q);
            let flip = if bits >> q & 1 == 0 { p10 } else { p01 };
            if flip > 0.0 && rng.gen::<f64>() < flip {
                bits ^= 1 << q;
            }
        }
        bits
    }

    /// Sum of ±1 parity outcomes over `shots`.
    fn run(&self, shots: u64, rng: &mut ChaCha8Rng) -> i64 {
        let gate_noise = self.noise.is_some_and(|n| n.has_gate_noise());
        let readout = self.noise.filter(|n| n.has_readout_noise());
        let mut sum = 0i64;
        for _ in 0..shots {
            let mut bits = match self.noise {
                Some(n) if gate_noise => {
                    let events = self.draw_events(n, rng);
                    if events.is_empty() {
                        self.sample_ideal(rng)
                    } else {
                        self.sample_trajectory(&events, rng)
                    }
                }
                _ => self.sample_ideal(rng),
            };
            if let Some(n) = readout {
                bits = self.apply_readout(bits, n, rng);
            }
            sum += if (bits & self.support).count_ones() % 2 == 0 { 1 } else { -1 };
        }
        sum
    }
}

/// Shot-based estimate `(mean, stderr)` of `⟨op⟩`.
pub fn expectation_sampled(
    c: &Circuit,
    params: &[f64],
    op: &QubitOperator,
    shots: u64,
    noise: Option<&NoiseProfile>,
    seed: u64,
) -> Result<(f64, f64)> {
    expectation_sampled_shifted(c, params, None, op, shots, noise, seed)
}

pub fn expectation_sampled_shifted(
    c: &Circuit,
    params: &[f64],
    shift: Option<Shift>,
    op: &QubitOperator,
    shots: u64,
    noise: Option<&NoiseProfile>,
    seed: u64,
) -> Result<(f64, f64)> {
    if shots == 0 {
        return Err(Error::Domain("shots must be at least 1".into()));
    }
    if op.n_qubits() != c.n_qubits {
        return Err(Error::Dimension(format!(
            "{}-qubit operator on {}-qubit circuit",
            op.n_qubits(),
            c.n_qubits
        )));
    }
    check_hermitian(op)?;
    if let Some(n) = noise {
        n.validate(Some(c.n_qubits))?;
    }
    let identity = op.identity_coefficient().re;
    let terms: Vec<(&PauliString, f64)> = op
        .iter()
        .filter(|(p, _)| !p.is_identity())
        .map(|(p, c)| (p, c.re))
        .collect();
    if terms.is_empty() {
        return Ok((identity, 0.0));
    }
    let per_term = (shots / terms.len() as u64).max(1);
    let ideal = run_statevector_shifted(c, params, shift)?;
    let prims = compile(c, &c.angles(params, shift));
    let parts: Vec<(f64, f64)> = terms
        .par_iter()
        .enumerate()
        .map(|(t, (p, coeff))| {
            let sampler = TermSampler::new(&prims, &ideal, p, noise);
            let mut rng = rng_for(seed, t as u64);
            let n = per_term as f64;
            let mean = sampler.run(per_term, &mut rng) as f64 / n;
            let var = if per_term > 1 { (1.0 - mean * mean).max(0.0) * n / (n - 1.0) } else { 1.0 };
            (coeff * mean, coeff * coeff * var / n)
        })
        .collect();
    let mean = identity + parts.iter().map(|p| p.0).sum::<f64>();
    let stderr = parts.iter().map(|p| p.1).sum::<f64>().sqrt();
    if !mean.is_finite() {
        return Err(Error::Numeric("non-finite sampled expectation".into()));
    }
    Ok((mean, stderr))
}

/// How cost values are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    Statevector,
    Sampled {
        shots: u64,
        #[serde(default)]
        noise: Option<NoiseProfile>,
    },
}

impl BackendConfig {
    pub fn label(&self) -> String {
        match self {
            BackendConfig::Statevector => "statevector".into(),
            BackendConfig::Sampled { shots, noise: None } => format!("sampled({shots} shots)"),
            BackendConfig::Sampled { shots, noise: Some(n) } => {
                format!("sampled({shots} shots, p1={}, p2={}, readout={:?})", n.p1, n.p2, n.readout)
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, BackendConfig::Statevector)
    }
}

/// Energy evaluator bound to a backend. Each sampled call draws from its own
/// RNG stream, indexed by the running call count.
#[derive(Debug, Clone)]
pub struct Estimator {
    config: BackendConfig,
    seed: u64,
    calls: u64,
}

impl Estimator {
    pub fn new(config: BackendConfig, seed: u64) -> Self {
        Estimator { config, seed, calls: 0 }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn is_exact(&self) -> bool {
        self.config.is_exact()
    }

    pub fn energy(&mut self, c: &Circuit, params: &[f64], op: &QubitOperator) -> Result<f64> {
        self.energy_shifted(c, params, None, op)
    }

    pub fn energy_shifted(
        &mut self,
        c: &Circuit,
        params: &[f64],
        shift: Option<Shift>,
        op: &QubitOperator,
    ) -> Result<f64> {
        self.calls += 1;
        match &self.config {
            BackendConfig::Statevector => expectation_exact(&run_statevector_shifted(c, params, shift)?, op),
            BackendConfig::Sampled { shots, noise } => {
                let seed = derive_seed(self.seed, self.calls);
                expectation_sampled_shifted(c, params, shift, op, *shots, noise.as_ref(), seed).map(|r| r.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    /// Dense unitary of a primitive, built independently of the simulator.
    fn dense(n: usize, g: &Gate, angle: f64) -> DMatrix<Complex64> {
        let one = |q: usize, m: [[Complex64; 2]; 2]| {
            let dim = 1 << n;
            DMatrix::from_fn(dim, dim, |r, col| {
                if (r ^ col) & !(1 << q) != 0 {
                    return c(0.0, 0.0);
                }
                m[r >> q & 1][col >> q & 1]
            })
        };
        let (s, co) = (angle / 2.0).sin_cos();
        let dim = 1 << n;
        match g {
            Gate::H(q) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                one(*q, [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]])
            }
            Gate::X(q) => one(*q, [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]),
            Gate::Rx(q, _) => one(*q, [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]),
            Gate::Ry(q, _) => one(*q, [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]),
            Gate::Rz(q, _) => one(*q, [[c(co, -s), c(0.0, 0.0)], [c(0.0, 0.0), c(co, s)]]),
            Gate::Cnot { control, target } => DMatrix::from_fn(dim, dim, |r, col| {
                let img = if col >> control & 1 == 1 { col ^ (1 << target) } else { col };
                if r == img { c(1.0, 0.0) } else { c(0.0, 0.0) }
            }),
            Gate::Cz(a, b) => DMatrix::from_fn(dim, dim, |r, col| {
                if r != col {
                    c(0.0, 0.0)
                } else if r >> a & 1 == 1 && r >> b & 1 == 1 {
                    c(-1.0, 0.0)
                } else {
                    c(1.0, 0.0)
                }
            }),
            Gate::PauliRotation(p, _) => {
                let pm = p.to_matrix().unwrap();
                DMatrix::identity(dim, dim).map(|z: Complex64| z * co) + pm.map(|z| z * c(0.0, -s))
            }
        }
    }

    #[test]
    fn empty_and_hadamard() {
        let circ = Circuit::new(2, 0).unwrap();
        let s = run_statevector(&circ, &[]).unwrap();
        assert_eq!(s.amplitudes()[0], c(1.0, 0.0));
        let mut h = Circuit::new(1, 0).unwrap();
        h.push(Gate::H(0)).unwrap();
        let s = run_statevector(&h, &[]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(s.amplitudes(), &[c(r, 0.0), c(r, 0.0)], 1e-15));
    }

    #[test]
    fn pauli_rotation_z_matches_rz() {
        for &theta in &[0.3, -1.7, 2.9] {
            let mut a = Circuit::new(1, 1).unwrap();
            a.push(Gate::H(0)).unwrap();
            a.push(Gate::PauliRotation("Z".parse().unwrap(), Angle::slot(0))).unwrap();
            let mut b = Circuit::new(1, 1).unwrap();
            b.push(Gate::H(0)).unwrap();
            b.push(Gate::Rz(0, Angle::slot(0))).unwrap();
            let sa = run_statevector(&a, &[theta]).unwrap();
            let sb = run_statevector(&b, &[theta]).unwrap();
            assert!(close(sa.amplitudes(), sb.amplitudes(), 1e-12));
        }
    }

    #[test]
    fn slot_mismatch_is_dimension_error() {
        let mut circ = Circuit::new(1, 1).unwrap();
        circ.push(Gate::Ry(0, Angle::slot(0))).unwrap();
        assert!(matches!(run_statevector(&circ, &[]), Err(Error::Dimension(_))));
        assert!(matches!(circ.push(Gate::Ry(0, Angle::slot(1))), Err(Error::Dimension(_))));
        assert!(matches!(circ.push(Gate::H(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn simple_expectations() {
        let z = QubitOperator::from_labels(&[(1.0, "Z")]).unwrap();
        let zero = Statevector::basis(1, 0).unwrap();
        assert_eq!(expectation_exact(&zero, &z).unwrap(), 1.0);
        let mut h = Circuit::new(1, 0).unwrap();
        h.push(Gate::H(0)).unwrap();
        let plus = run_statevector(&h, &[]).unwrap();
        assert!(expectation_exact(&plus, &z).unwrap().abs() < 1e-15);
    }

    #[test]
    fn identity_only_is_exact() {
        let mut h = Circuit::new(2, 0).unwrap();
        h.push(Gate::H(0)).unwrap();
        let op = QubitOperator::identity(2, 2.5);
        let noise = NoiseProfile::uniform(0.1, 0.1, 0.1);
        assert_eq!(expectation_sampled(&h, &[], &op, 10, Some(&noise), 3).unwrap(), (2.5, 0.0));
        assert!(matches!(expectation_sampled(&h, &[], &op, 0, None, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn readout_bias() {
        let circ = Circuit::new(1, 0).unwrap();
        let z = QubitOperator::from_labels(&[(1.0, "Z")]).unwrap();
        let p = 0.1;
        let noise = NoiseProfile { p1: 0.0, p2: 0.0, readout: vec![[p, 0.3]] };
        let (mean, se) = expectation_sampled(&circ, &[], &z, 200_000, Some(&noise), 11).unwrap();
        assert!((mean - (1.0 - 2.0 * p)).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn full_depolarizing_erases_bloch_vector() {
        let mut circ = Circuit::new(1, 0).unwrap();
        circ.push(Gate::H(0)).unwrap();
        let noise = NoiseProfile { p1: 1.0, p2: 0.0, readout: vec![] };
        for label in ["X", "Y", "Z"] {
            let op = QubitOperator::from_labels(&[(1.0, label)]).unwrap();
            let (mean, se) = expectation_sampled(&circ, &[], &op, 40_000, Some(&noise), 5).unwrap();
            assert!(mean.abs() < 4.0 * se, "{label}: {mean} ± {se}");
        }
    }

    #[test]
    fn compiled_rotations_match_direct() {
        // both basis changes and the parity ladder must reproduce exp(-iθ/2 P)
        for label in ["X", "Y", "XY", "YZX", "ZIY", "YY"] {
            let p: PauliString = label.parse().unwrap();
            let n = p.n_qubits();
            let mut circ = Circuit::new(n, 1).unwrap();
            for q in 0..n {
                circ.push(Gate::Ry(q, Angle::Const(0.4 + 0.3 * q as f64))).unwrap();
                circ.push(Gate::Rz(q, Angle::Const(0.2 * q as f64 - 0.5))).unwrap();
            }
            circ.push(Gate::PauliRotation(p, Angle::slot(0))).unwrap();
            let params = [0.77];
            let direct = run_statevector(&circ, &params).unwrap();
            let mut s = Statevector::basis(n, 0).unwrap();
            for g in compile(&circ, &circ.angles(&params, None)) {
                s.apply_prim(g);
            }
            assert!(close(direct.amplitudes(), s.amplitudes(), 1e-12), "{label}");
        }
    }

    #[test]
    fn measurement_basis_change_diagonalizes() {
        // after the pre-rotation, P's expectation equals the parity of Z on its support
        for label in ["X", "Y", "XY", "ZYX"] {
            let p: PauliString = label.parse().unwrap();
            let n = p.n_qubits();
            let mut circ = Circuit::new(n, 0).unwrap();
            for q in 0..n {
                circ.push(Gate::Rx(q, Angle::Const(0.3 + q as f64))).unwrap();
                circ.push(Gate::Ry(q, Angle::Const(0.9 - 0.4 * q as f64))).unwrap();
            }
            let s = run_statevector(&circ, &[]).unwrap();
            let want = pauli_expectation(&s, &p).re;
            let mut pre = Vec::new();
            basis_change_pre(&p, &mut pre);
            let mut r = s.clone();
            for g in pre {
                r.apply_prim(g);
            }
            let support = p.support() as usize;
            let got: f64 = r
                .probabilities()
                .iter()
                .enumerate()
                .map(|(b, pr)| if (b & support).count_ones() % 2 == 0 { *pr } else { -pr })
                .sum();
            assert!((want - got).abs() < 1e-12, "{label}");
        }
    }

    #[test]
    fn noise_profile_json() {
        let n = NoiseProfile::from_json(r#"{"p1":0.001,"p2":0.01,"readout":[[0.02,0.02]]}"#).unwrap();
        assert_eq!(n.readout_for(5), [0.02, 0.02]);
        assert!(matches!(NoiseProfile::from_json(r#"{"p1":1.5}"#), Err(Error::Domain(_))));
        assert!(matches!(NoiseProfile::from_json(r#"{"p3":0.1}"#), Err(Error::Schema(_))));
    }

    #[test]
    fn geometric_skipping_rate() {
        let mut rng = rng_for(1, 0);
        let mut hits = Vec::new();
        let trials = 20_000;
        for _ in 0..trials {
            draw_sites(10, 0.05, &mut rng, &mut hits);
        }
        let rate = hits.len() as f64 / (10 * trials) as f64;
        assert!((rate - 0.05).abs() < 0.003, "{rate}");
        assert!(hits.iter().all(|&h| h < 10));
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::X),
            q.clone().prop_map(|q| Gate::Rx(q, Angle::slot(0))),
            q.clone().prop_map(|q| Gate::Ry(q, Angle::Slot { index: 1, scale: -0.5 })),
            q.clone().prop_map(|q| Gate::Rz(q, Angle::Const(0.7))),
            (0..n, 1..n).prop_map(move |(a, d)| Gate::Cnot { control: a, target: (a + d) % n }),
            (0..n, 1..n).prop_map(move |(a, d)| Gate::Cz(a, (a + d) % n)),
            (0u64..(1 << n), 0u64..(1 << n))
                .prop_map(move |(x, z)| Gate::PauliRotation(PauliString::from_masks(n, x, z).unwrap(), Angle::slot(1))),
        ]
    }

    proptest! {
        #[test]
        fn statevector_matches_dense_unitaries(
            gates in proptest::collection::vec(arb_gate(3), 0..20),
            t0 in -3.0f64..3.0,
            t1 in -3.0f64..3.0,
            init in 0usize..8,
        ) {
            let mut circ = Circuit::new(3, 2).unwrap().with_initial_state(init).unwrap();
            for g in &gates {
                circ.push(g.clone()).unwrap();
            }
            let params = [t0, t1];
            let mut state = Statevector::basis(3, init).unwrap();
            let mut oracle = DMatrix::<Complex64>::zeros(8, 1);
            oracle[(init, 0)] = c(1.0, 0.0);
            for (g, a) in circ.gates().iter().zip(circ.angles(&params, None)) {
                state.apply_gate(g, a);
                prop_assert!((state.norm() - 1.0).abs() < 1e-10);
                oracle = dense(3, g, a) * oracle;
            }
            let want: Vec<Complex64> = oracle.iter().copied().collect();
            prop_assert!(close(state.amplitudes(), &want, 1e-10));
            let run = run_statevector(&circ, &params).unwrap();
            prop_assert_eq!(run.amplitudes(), state.amplitudes());
        }
    }
}
