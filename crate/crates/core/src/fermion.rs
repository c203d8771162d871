//! Occupation-number states, ladder operators and fermion-to-qubit encodings.
//!
//! Spin orbitals use blocked ordering: spatial orbital `p` gives mode `p` (α)
//! and mode `p + n_spatial` (β).

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString, QubitOperator};

/// Occupation bits, mode `p` stored in bit `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OccupationState {
    n_modes: usize,
    bits: u64,
}

impl OccupationState {
    pub fn new(n_modes: usize, bits: u64) -> Self {
        assert!(n_modes <= 64);
        OccupationState { n_modes, bits }
    }

    pub fn from_occupations(occ: &[u8]) -> Self {
        let bits = occ
            .iter()
            .enumerate()
            .filter(|(_, &k)| k != 0)
            .fold(0u64, |acc, (p, _)| acc | (1 << p));
        OccupationState::new(occ.len(), bits)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_occupied(&self, mode: usize) -> bool {
        (self.bits >> mode) & 1 == 1
    }

    pub fn n_electrons(&self) -> u32 {
        self.bits.count_ones()
    }
}

impl fmt::Display for OccupationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for p in 0..self.n_modes {
            write!(f, "{}", u8::from(self.is_occupied(p)))?;
        }
        write!(f, ">")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ladder {
    pub mode: usize,
    pub dagger: bool,
}

impl Ladder {
    pub fn create(mode: usize) -> Self {
        Ladder { mode, dagger: true }
    }

    pub fn annihilate(mode: usize) -> Self {
        Ladder { mode, dagger: false }
    }
}

/// Applies a product of ladder operators, rightmost first.
///
/// Returns phase 0 when the product annihilates the state.
pub fn apply_ladder_product(factors: &[Ladder], state: OccupationState) -> (i8, OccupationState) {
    let mut bits = state.bits;
    let mut phase: i8 = 1;
    for f in factors.iter().rev() {
        let occupied = (bits >> f.mode) & 1 == 1;
        if occupied == f.dagger {
            return (0, state);
        }
        let below = bits & ((1u64 << f.mode) - 1);
        if below.count_ones() % 2 == 1 {
            phase = -phase;
        }
        bits ^= 1 << f.mode;
    }
    (phase, OccupationState { n_modes: state.n_modes, bits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FermionTerm {
    pub coeff: Complex64,
    pub factors: Vec<Ladder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FermionOperator {
    n_modes: usize,
    terms: Vec<FermionTerm>,
}

impl FermionOperator {
    pub fn new(n_modes: usize) -> Self {
        assert!(n_modes >= 1 && n_modes <= 64, "mode count must be in 1..=64");
        FermionOperator { n_modes, terms: Vec::new() }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn terms(&self) -> &[FermionTerm] {
        &self.terms
    }

    pub fn add_term(&mut self, coeff: Complex64, factors: Vec<Ladder>) -> Result<()> {
        if let Some(f) = factors.iter().find(|f| f.mode >= self.n_modes) {
            return Err(Error::Dimension(format!(
                "mode {} outside {} modes",
                f.mode, self.n_modes
            )));
        }
        self.terms.push(FermionTerm { coeff, factors });
        Ok(())
    }

    pub fn add_real(&mut self, coeff: f64, factors: &[Ladder]) -> Result<()> {
        self.add_term(Complex64::new(coeff, 0.0), factors.to_vec())
    }

    /// Hermitian conjugate: reversed factor order, flipped daggers, conjugated coefficients.
    pub fn adjoint(&self) -> FermionOperator {
        let terms = self
            .terms
            .iter()
            .map(|t| FermionTerm {
                coeff: t.coeff.conj(),
                factors: t
                    .factors
                    .iter()
                    .rev()
                    .map(|f| Ladder { mode: f.mode, dagger: !f.dagger })
                    .collect(),
            })
            .collect();
        FermionOperator { n_modes: self.n_modes, terms }
    }

    pub fn scaled(&self, s: Complex64) -> FermionOperator {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= s;
        }
        out
    }

    pub fn extend(&mut self, other: &FermionOperator) -> Result<()> {
        if other.n_modes != self.n_modes {
            return Err(Error::Dimension("mode counts differ".into()));
        }
        self.terms.extend(other.terms.iter().cloned());
        Ok(())
    }

    /// Total number operator `Σ_p a_p† a_p`.
    pub fn number(n_modes: usize) -> FermionOperator {
        let mut op = FermionOperator::new(n_modes);
        for p in 0..n_modes {
            op.terms.push(FermionTerm {
                coeff: Complex64::new(1.0, 0.0),
                factors: vec![Ladder::create(p), Ladder::annihilate(p)],
            });
        }
        op
    }
}

/// Qubit encodings before any symmetry reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    JordanWigner,
    Parity,
}

/// Mapping as selected by users: plain Jordan-Wigner, or parity followed by
/// removal of the two spin-parity qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    #[serde(alias = "jw")]
    JordanWigner,
    #[serde(alias = "parity")]
    ParityReduced,
}

impl Mapping {
    pub fn n_qubits(self, n_modes: usize) -> usize {
        match self {
            Mapping::JordanWigner => n_modes,
            Mapping::ParityReduced => n_modes - 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mapping::JordanWigner => "jw",
            Mapping::ParityReduced => "parity-reduced",
        }
    }
}

impl std::str::FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jw" | "jordan-wigner" => Ok(Mapping::JordanWigner),
            "parity-reduced" | "parity" => Ok(Mapping::ParityReduced),
            other => Err(Error::Parse(format!("unknown mapping {other:?}"))),
        }
    }
}

fn ladder_terms(l: Ladder, n_modes: usize, enc: Encoding) -> [(PauliString, Complex64); 2] {
    let j = l.mode;
    // a† = ½(c - i d), a = ½(c + i d) with Majoranas c, d
    let (mut c, mut d) = match enc {
        Encoding::JordanWigner => {
            let mut c = PauliString::single(n_modes, j, Pauli::X);
            let mut d = PauliString::single(n_modes, j, Pauli::Y);
            for k in 0..j {
                c.set(k, Pauli::Z);
                d.set(k, Pauli::Z);
            }
            (c, d)
        }
        Encoding::Parity => {
            let mut c = PauliString::single(n_modes, j, Pauli::X);
            let d = PauliString::single(n_modes, j, Pauli::Y);
            if j > 0 {
                c.set(j - 1, Pauli::Z);
            }
            (c, d)
        }
    };
    if enc == Encoding::Parity {
        for k in j + 1..n_modes {
            c.set(k, Pauli::X);
            d.set(k, Pauli::X);
        }
    }
    let half = Complex64::new(0.5, 0.0);
    let di = if l.dagger { Complex64::new(0.0, -0.5) } else { Complex64::new(0.0, 0.5) };
    [(c, half), (d, di)]
}

/// Maps a fermion operator with the chosen unreduced encoding.
pub fn encode(f: &FermionOperator, enc: Encoding) -> QubitOperator {
    let n = f.n_modes;
    let mut out = QubitOperator::zero(n);
    let mut acc: Vec<(PauliString, Complex64)> = Vec::new();
    let mut next: Vec<(PauliString, Complex64)> = Vec::new();
    for term in &f.terms {
        acc.clear();
        acc.push((PauliString::identity(n), term.coeff));
        for &l in &term.factors {
            next.clear();
            let lt = ladder_terms(l, n, enc);
            for (p, c) in &acc {
                for (q, d) in &lt {
                    let (ph, r) = p.mul_unchecked(q);
                    next.push((r, ph * c * d));
                }
            }
            std::mem::swap(&mut acc, &mut next);
        }
        for (p, c) in acc.drain(..) {
            out.add_term(p, c);
        }
    }
    out.simplify();
    out
}

pub fn jordan_wigner(f: &FermionOperator) -> QubitOperator {
    encode(f, Encoding::JordanWigner)
}

/// Number of α electrons used for the HF reference and the spin-parity sector.
pub fn alpha_count(n_electrons: usize) -> usize {
    n_electrons.div_ceil(2)
}

/// Parity encoding followed by removal of qubits `n/2 - 1` (α parity) and
/// `n - 1` (total parity), whose Z eigenvalues are fixed by the electron counts.
pub fn parity_map_reduced(f: &FermionOperator, n_electrons: usize) -> Result<QubitOperator> {
    let n = f.n_modes;
    if n % 2 != 0 || n < 2 {
        return Err(Error::Symmetry(format!(
            "two-qubit reduction needs an even mode count, got {n}"
        )));
    }
    let encoded = encode(f, Encoding::Parity);
    reduce_parity_qubits(&encoded, n_electrons)
}

fn reduce_parity_qubits(op: &QubitOperator, n_electrons: usize) -> Result<QubitOperator> {
    let n = op.n_qubits();
    let m = n / 2;
    let qa = m - 1;
    let qt = n - 1;
    let n_alpha = alpha_count(n_electrons);
    let sign_a = if n_alpha % 2 == 0 { 1.0 } else { -1.0 };
    let sign_t = if n_electrons % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = QubitOperator::zero(n - 2);
    for (p, c) in op.iter() {
        if (p.x_mask() >> qa) & 1 == 1 || (p.x_mask() >> qt) & 1 == 1 {
            if c.norm() > 1e-10 {
                return Err(Error::Symmetry(format!(
                    "term {p} does not commute with the removed parity symmetries"
                )));
            }
            continue;
        }
        let mut coeff = *c;
        if (p.z_mask() >> qa) & 1 == 1 {
            coeff *= sign_a;
        }
        if (p.z_mask() >> qt) & 1 == 1 {
            coeff *= sign_t;
        }
        let x = remove_bits(p.x_mask(), qa, qt);
        let z = remove_bits(p.z_mask(), qa, qt);
        out.add_term(PauliString::from_masks(n - 2, x, z)?, coeff);
    }
    out.simplify();
    Ok(out)
}

/// Deletes bit positions `lo < hi` and closes the gaps.
fn remove_bits(v: u64, lo: usize, hi: usize) -> u64 {
    let drop = |v: u64, k: usize| (v & ((1u64 << k) - 1)) | ((v >> (k + 1)) << k);
    drop(drop(v, hi), lo)
}

/// Maps with the user-facing mapping; `n_electrons` fixes the reduced sector.
pub fn map_operator(f: &FermionOperator, mapping: Mapping, n_electrons: usize) -> Result<QubitOperator> {
    match mapping {
        Mapping::JordanWigner => Ok(jordan_wigner(f)),
        Mapping::ParityReduced => parity_map_reduced(f, n_electrons),
    }
}

/// Transforms an occupation bit pattern to the mapping's computational basis index.
pub fn occupation_to_index(occ: OccupationState, mapping: Mapping) -> usize {
    match mapping {
        Mapping::JordanWigner => occ.bits as usize,
        Mapping::ParityReduced => {
            let n = occ.n_modes;
            let mut parity = 0u64;
            let mut acc = 0u64;
            for j in 0..n {
                acc ^= (occ.bits >> j) & 1;
                parity |= acc << j;
            }
            remove_bits(parity, n / 2 - 1, n - 1) as usize
        }
    }
}

/// Aufbau Hartree-Fock occupation: lowest `ceil(N/2)` α and `floor(N/2)` β orbitals.
pub fn hf_occupation(n_modes: usize, n_electrons: usize) -> Result<OccupationState> {
    if n_electrons > n_modes {
        return Err(Error::Domain(format!(
            "{n_electrons} electrons do not fit in {n_modes} modes"
        )));
    }
    if n_modes % 2 != 0 {
        return Ok(OccupationState::new(n_modes, (1u64 << n_electrons) - 1));
    }
    let m = n_modes / 2;
    let na = alpha_count(n_electrons);
    let nb = n_electrons - na;
    if na > m {
        return Err(Error::Domain(format!("{na} alpha electrons exceed {m} orbitals")));
    }
    let bits = ((1u64 << na) - 1) | (((1u64 << nb) - 1) << m);
    Ok(OccupationState::new(n_modes, bits))
}

pub fn hf_reference(n_modes: usize, n_electrons: usize, mapping: Mapping) -> Result<usize> {
    Ok(occupation_to_index(hf_occupation(n_modes, n_electrons)?, mapping))
}
