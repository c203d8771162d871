//! UCCSD and TwoLocal circuits, and parameter-shift gradients.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{Angle, Circuit, Estimator, Gate, Shift};
use crate::error::{Error, Result};
use crate::fermion::{hf_occupation, hf_reference, map_operator, FermionOperator, Ladder, Mapping};
use crate::pauli::QubitOperator;

/// Spin-conserving excitations out of the Hartree-Fock determinant, in
/// blocked spin ordering (α modes first).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExcitationList {
    /// `(occupied, virtual)`.
    pub singles: Vec<(usize, usize)>,
    /// `(i, j, k, l)` with `i < j` occupied and `k < l` virtual.
    pub doubles: Vec<(usize, usize, usize, usize)>,
}

impl ExcitationList {
    pub fn len(&self) -> usize {
        self.singles.len() + self.doubles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn uccsd_excitations(n_spin_orbitals: usize, n_electrons: usize) -> Result<ExcitationList> {
    if n_spin_orbitals % 2 != 0 {
        return Err(Error::Domain("UCCSD needs an even number of spin orbitals".into()));
    }
    let occ = hf_occupation(n_spin_orbitals, n_electrons)?;
    let m = n_spin_orbitals / 2;
    let spin = |p: usize| p / m;
    let occupied: Vec<usize> = (0..n_spin_orbitals).filter(|&p| occ.is_occupied(p)).collect();
    let virtuals: Vec<usize> = (0..n_spin_orbitals).filter(|&p| !occ.is_occupied(p)).collect();
    let mut out = ExcitationList::default();
    for &i in &occupied {
        for &k in &virtuals {
            if spin(i) == spin(k) {
                out.singles.push((i, k));
            }
        }
    }
    for (a, &i) in occupied.iter().enumerate() {
        for &j in &occupied[a + 1..] {
            for (b, &k) in virtuals.iter().enumerate() {
                for &l in &virtuals[b + 1..] {
                    if spin(i) + spin(j) == spin(k) + spin(l) {
                        out.doubles.push((i, j, k, l));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    H,
    Ry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entangler {
    Cz,
    Cnot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entanglement {
    Linear,
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLocalSpec {
    pub rotation_blocks: Vec<Rotation>,
    pub entangler: Entangler,
    pub entanglement: Entanglement,
    pub reps: usize,
}

impl TwoLocalSpec {
    /// H and RY rotations, full CZ entanglement, two repetitions.
    pub fn hardware_efficient() -> Self {
        TwoLocalSpec {
            rotation_blocks: vec![Rotation::H, Rotation::Ry],
            entangler: Entangler::Cz,
            entanglement: Entanglement::Full,
            reps: 2,
        }
    }

    pub fn n_params(&self, n_qubits: usize) -> usize {
        let ry = self.rotation_blocks.iter().filter(|r| **r == Rotation::Ry).count();
        n_qubits * ry * (self.reps + 1)
    }

    fn pairs(&self, n_qubits: usize) -> Vec<(usize, usize)> {
        match self.entanglement {
            Entanglement::Linear => (0..n_qubits.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            Entanglement::Full => (0..n_qubits)
                .flat_map(|i| (i + 1..n_qubits).map(move |j| (i, j)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnsatzSpec {
    Uccsd,
    TwoLocal(TwoLocalSpec),
}

impl AnsatzSpec {
    pub fn label(&self) -> String {
        match self {
            AnsatzSpec::Uccsd => "uccsd".into(),
            AnsatzSpec::TwoLocal(t) => format!(
                "twolocal({}, {:?}, {:?}, reps={})",
                t.rotation_blocks
                    .iter()
                    .map(|r| format!("{r:?}").to_lowercase())
                    .collect::<Vec<_>>()
                    .join("+"),
                t.entangler,
                t.entanglement,
                t.reps
            )
            .to_lowercase(),
        }
    }
}

impl fmt::Display for AnsatzSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for AnsatzSpec {
    type Err = Error;

    /// `uccsd`, `twolocal` (H+RY, CZ, full, 2 reps) or `twolocal:linear:1`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mut parts = lower.split(':');
        match parts.next() {
            Some("uccsd") if parts.next().is_none() => Ok(AnsatzSpec::Uccsd),
            Some("twolocal") | Some("two-local") => {
                let mut t = TwoLocalSpec::hardware_efficient();
                if let Some(e) = parts.next() {
                    t.entanglement = match e {
                        "linear" => Entanglement::Linear,
                        "full" => Entanglement::Full,
                        _ => return Err(Error::Parse(format!("unknown entanglement {e:?}"))),
                    };
                }
                if let Some(r) = parts.next() {
                    t.reps = r.parse().map_err(|_| Error::Parse(format!("bad repetition count {r:?}")))?;
                }
                Ok(AnsatzSpec::TwoLocal(t))
            }
            _ => Err(Error::Parse(format!("unknown ansatz {s:?}"))),
        }
    }
}

/// `T - T†` for one excitation.
fn excitation_generator(n_modes: usize, ladders: &[Ladder]) -> Result<FermionOperator> {
    let mut t = FermionOperator::new(n_modes);
    t.add_real(1.0, ladders)?;
    let mut g = t.clone();
    g.extend(&t.adjoint().scaled(num_complex::Complex64::new(-1.0, 0.0)))?;
    Ok(g)
}

/// Mapped `T - T†` written as `i Σ c_a P_a`; returns `(P_a, c_a)`.
fn mapped_rotations(g: &FermionOperator, mapping: Mapping, n_electrons: usize) -> Result<QubitOperator> {
    let q = map_operator(g, mapping, n_electrons)?;
    if let Some((p, c)) = q.iter().find(|(_, c)| c.re.abs() > 1e-10) {
        return Err(Error::Numeric(format!(
            "excitation generator is not anti-Hermitian: {p} has real part {}",
            c.re
        )));
    }
    Ok(q)
}

fn uccsd_circuit(mapping: Mapping, n_qubits: usize, n_electrons: usize) -> Result<Circuit> {
    let n_modes = match mapping {
        Mapping::JordanWigner => n_qubits,
        Mapping::ParityReduced => n_qubits + 2,
    };
    let ex = uccsd_excitations(n_modes, n_electrons)?;
    let hf = hf_reference(n_modes, n_electrons, mapping)?;
    let mut c = Circuit::new(n_qubits, ex.len())?.with_initial_state(hf)?;
    let mut slot = 0;
    let mut emit = |c: &mut Circuit, ladders: &[Ladder]| -> Result<()> {
        let g = excitation_generator(n_modes, ladders)?;
        for (p, coeff) in mapped_rotations(&g, mapping, n_electrons)?.iter() {
            // exp(θ i c P) = exp(-i (-2cθ)/2 P)
            c.push(Gate::PauliRotation(*p, Angle::Slot { index: slot, scale: -2.0 * coeff.im }))?;
        }
        slot += 1;
        Ok(())
    };
    for &(i, k) in &ex.singles {
        emit(&mut c, &[Ladder::create(k), Ladder::annihilate(i)])?;
    }
    for &(i, j, k, l) in &ex.doubles {
        emit(
            &mut c,
            &[Ladder::create(k), Ladder::create(l), Ladder::annihilate(j), Ladder::annihilate(i)],
        )?;
    }
    Ok(c)
}

fn two_local_circuit(spec: &TwoLocalSpec, n_qubits: usize) -> Result<Circuit> {
    if spec.reps == 0 {
        return Err(Error::Domain("TwoLocal needs at least one repetition".into()));
    }
    let mut c = Circuit::new(n_qubits, spec.n_params(n_qubits))?;
    let mut slot = 0;
    let mut rotations = |c: &mut Circuit| -> Result<()> {
        for block in &spec.rotation_blocks {
            for q in 0..n_qubits {
                match block {
                    Rotation::H => c.push(Gate::H(q))?,
                    Rotation::Ry => {
                        c.push(Gate::Ry(q, Angle::slot(slot)))?;
                        slot += 1;
                    }
                }
            }
        }
        Ok(())
    };
    let pairs = spec.pairs(n_qubits);
    for _ in 0..spec.reps {
        rotations(&mut c)?;
        for &(a, b) in &pairs {
            match spec.entangler {
                Entangler::Cz => c.push(Gate::Cz(a, b))?,
                Entangler::Cnot => c.push(Gate::Cnot { control: a, target: b })?,
            }
        }
    }
    rotations(&mut c)?;
    Ok(c)
}

/// Builds the parameterized circuit. UCCSD starts from the Hartree-Fock basis
/// state of `n_electrons`; TwoLocal starts from |0…0⟩.
pub fn build_ansatz_circuit(spec: &AnsatzSpec, mapping: Mapping, n_qubits: usize, n_electrons: usize) -> Result<Circuit> {
    match spec {
        AnsatzSpec::Uccsd => uccsd_circuit(mapping, n_qubits, n_electrons),
        AnsatzSpec::TwoLocal(t) => two_local_circuit(t, n_qubits),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Product rule: each gate sharing a slot is shifted on its own.
    ExactSubgate,
    /// Shifts the slot itself by ±π/2, which is only exact when the slot
    /// drives a single rotation.
    NaiveTwoterm,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exact-subgate" | "exact" => Ok(GradientMode::ExactSubgate),
            "naive-twoterm" | "naive" => Ok(GradientMode::NaiveTwoterm),
            _ => Err(Error::Parse(format!("unknown gradient mode {s:?}"))),
        }
    }
}

/// Number of energy evaluations one gradient costs.
pub fn shift_rule_cost(c: &Circuit, mode: GradientMode) -> usize {
    match mode {
        GradientMode::ExactSubgate => 2 * c.parameterized_gates().count(),
        GradientMode::NaiveTwoterm => 2 * c.n_params(),
    }
}

/// Parameter-shift gradient with `r = 1/2`, `s = π/2`.
pub fn shift_rule_gradient(
    c: &Circuit,
    params: &[f64],
    op: &QubitOperator,
    estimator: &mut Estimator,
    mode: GradientMode,
) -> Result<Vec<f64>> {
    if params.len() != c.n_params() {
        return Err(Error::Dimension(format!(
            "circuit takes {} parameters, got {}",
            c.n_params(),
            params.len()
        )));
    }
    for (g, _, _) in c.parameterized_gates() {
        match c.gates()[g] {
            Gate::Rx(..) | Gate::Ry(..) | Gate::Rz(..) | Gate::PauliRotation(..) => {}
            ref other => return Err(Error::UnsupportedGate(other.name().into())),
        }
    }
    let mut grad = vec![0.0; c.n_params()];
    match mode {
        GradientMode::ExactSubgate => {
            let gates: Vec<(usize, usize, f64)> = c.parameterized_gates().collect();
            for (g, slot, scale) in gates {
                let plus = estimator.energy_shifted(c, params, Some(Shift { gate: g, delta: FRAC_PI_2 }), op)?;
                let minus = estimator.energy_shifted(c, params, Some(Shift { gate: g, delta: -FRAC_PI_2 }), op)?;
                grad[slot] += scale * 0.5 * (plus - minus);
            }
        }
        GradientMode::NaiveTwoterm => {
            let mut x = params.to_vec();
            for j in 0..x.len() {
                x[j] = params[j] + FRAC_PI_2;
                let plus = estimator.energy(c, &x, op)?;
                x[j] = params[j] - FRAC_PI_2;
                let minus = estimator.energy(c, &x, op)?;
                x[j] = params[j];
                grad[j] = 0.5 * (plus - minus);
            }
        }
    }
    Ok(grad)
}
