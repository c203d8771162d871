//! Pauli strings in symplectic (X-mask, Z-mask) form and weighted sums of them.
//!
//! A string is stored as `i^{n_y} X^x Z^z`, where `n_y = popcount(x & z)`, so
//! that a `1` in both masks at qubit `q` is exactly `Y_q`. Qubit `q` is bit `q`
//! of the masks and of computational-basis indices; text form puts qubit 0
//! leftmost.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients with smaller magnitude are dropped by [`QubitOperator::simplify`].
pub const PRUNE_EPS: f64 = 1e-12;

/// Largest register [`QubitOperator::to_matrix`] will materialize.
pub const MAX_DENSE_QUBITS: usize = 14;

/// Largest register representable by the 64-bit masks.
pub const MAX_QUBITS: usize = 64;

#[inline]
fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n_qubits: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        assert!(n_qubits <= MAX_QUBITS, "at most {MAX_QUBITS} qubits supported");
        PauliString { n_qubits, x: 0, z: 0 }
    }

    /// Builds a string from raw masks. Bits at or above `n_qubits` must be clear.
    pub fn from_masks(n_qubits: usize, x: u64, z: u64) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::Resource(format!("{n_qubits} qubits exceeds {MAX_QUBITS}")));
        }
        let valid = if n_qubits == 64 { u64::MAX } else { (1u64 << n_qubits) - 1 };
        if (x | z) & !valid != 0 {
            return Err(Error::Dimension(format!(
                "mask bits set beyond qubit count {n_qubits}"
            )));
        }
        Ok(PauliString { n_qubits, x, z })
    }

    pub fn single(n_qubits: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n_qubits);
        s.set(qubit, p);
        s
    }

    pub fn from_paulis(paulis: &[Pauli]) -> Self {
        let mut s = Self::identity(paulis.len());
        for (q, &p) in paulis.iter().enumerate() {
            s.set(q, p);
        }
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Qubits acted on non-trivially.
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    fn n_y(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        assert!(qubit < self.n_qubits);
        match ((self.x >> qubit) & 1, (self.z >> qubit) & 1) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    pub fn set(&mut self, qubit: usize, p: Pauli) {
        assert!(qubit < self.n_qubits, "qubit {qubit} out of range");
        let bit = 1u64 << qubit;
        let (xb, zb) = p.bits();
        self.x = if xb { self.x | bit } else { self.x & !bit };
        self.z = if zb { self.z | bit } else { self.z & !bit };
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// `self · other = phase · result`.
    pub fn mul(&self, other: &PauliString) -> Result<(Complex64, PauliString)> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Dimension(format!(
                "pauli product of {} and {} qubit strings",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &PauliString) -> (Complex64, PauliString) {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let out = PauliString { n_qubits: self.n_qubits, x, z };
        // Z^{z1} X^{x2} = (-1)^{|z1 & x2|} X^{x2} Z^{z1}
        let e = self.n_y() + other.n_y() + 2 * (self.z & other.x).count_ones() + 4
            - (out.n_y() % 4);
        (i_pow(e), out)
    }

    /// Action on a computational basis state: `P|b> = phase |b'>`.
    #[inline]
    pub fn apply_to_basis(&self, b: usize) -> (Complex64, usize) {
        let k = self.n_y() + 2 * ((self.z & b as u64).count_ones() % 2);
        (i_pow(k), b ^ self.x as usize)
    }

    /// 2×2 single-qubit matrices multiplied out as a Kronecker product
    /// (qubit 0 is the least significant index bit).
    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::Resource(format!(
                "dense matrix of {} qubits exceeds guard {MAX_DENSE_QUBITS}",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let (ph, r) = self.apply_to_basis(b);
            m[(r, b)] = ph;
        }
        Ok(m)
    }

    pub fn paulis(&self) -> impl Iterator<Item = Pauli> + '_ {
        (0..self.n_qubits).map(move |q| self.get(q))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.paulis() {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let paulis = s
            .chars()
            .map(|c| match c {
                'I' | 'i' => Ok(Pauli::I),
                'X' | 'x' => Ok(Pauli::X),
                'Y' | 'y' => Ok(Pauli::Y),
                'Z' | 'z' => Ok(Pauli::Z),
                other => Err(Error::Parse(format!("invalid pauli character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if paulis.is_empty() || paulis.len() > MAX_QUBITS {
            return Err(Error::Parse(format!("pauli string length {} out of range", paulis.len())));
        }
        Ok(PauliString::from_paulis(&paulis))
    }
}

/// Weighted sum of Pauli strings on a fixed register.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitOperator {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl QubitOperator {
    pub fn zero(n_qubits: usize) -> Self {
        QubitOperator { n_qubits, terms: BTreeMap::new() }
    }

    pub fn identity(n_qubits: usize, coeff: f64) -> Self {
        let mut op = Self::zero(n_qubits);
        op.add_term(PauliString::identity(n_qubits), Complex64::new(coeff, 0.0));
        op.simplify();
        op
    }

    pub fn from_term(p: PauliString, coeff: Complex64) -> Self {
        let mut op = Self::zero(p.n_qubits());
        op.add_term(p, coeff);
        op
    }

    /// Parses `[(coeff, "IXYZ")]` pairs; handy in tests and fixtures.
    pub fn from_labels(terms: &[(f64, &str)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Domain("empty term list".into()))?;
        let n = first.1.len();
        let mut op = Self::zero(n);
        for &(c, label) in terms {
            let p: PauliString = label.parse()?;
            if p.n_qubits() != n {
                return Err(Error::Dimension(format!("label {label} is not {n} qubits")));
            }
            op.add_term(p, Complex64::new(c, 0.0));
        }
        op.simplify();
        Ok(op)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in deterministic (mask-lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    pub fn identity_coefficient(&self) -> Complex64 {
        self.coefficient(&PauliString::identity(self.n_qubits))
    }

    /// Accumulates without pruning; call [`simplify`](Self::simplify) afterwards.
    pub fn add_term(&mut self, p: PauliString, coeff: Complex64) {
        assert_eq!(p.n_qubits(), self.n_qubits, "term width differs from operator width");
        *self.terms.entry(p).or_default() += coeff;
    }

    pub fn simplify(&mut self) {
        // NaN norms must survive pruning so the failure stays visible
        self.terms.retain(|_, c| !(c.norm() < PRUNE_EPS));
    }

    pub fn scale(&self, s: Complex64) -> QubitOperator {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= s;
        }
        out.simplify();
        out
    }

    pub fn add(&self, other: &QubitOperator) -> Result<QubitOperator> {
        op_sum(&[self.clone(), other.clone()])
    }

    pub fn mul(&self, other: &QubitOperator) -> Result<QubitOperator> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Dimension(format!(
                "operator product of {} and {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        let mut out = QubitOperator::zero(self.n_qubits);
        for (pa, ca) in &self.terms {
            for (pb, cb) in &other.terms {
                let (ph, p) = pa.mul_unchecked(pb);
                out.add_term(p, ph * ca * cb);
            }
        }
        out.simplify();
        Ok(out)
    }

    pub fn adjoint(&self) -> QubitOperator {
        QubitOperator {
            n_qubits: self.n_qubits,
            terms: self.terms.iter().map(|(p, c)| (*p, c.conj())).collect(),
        }
    }

    /// Hermitian exactly when every coefficient is real (up to `tol`).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms.values().all(|c| c.im.abs() <= tol)
    }

    pub fn max_imag(&self) -> f64 {
        self.terms.values().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// Drops imaginary parts; caller is responsible for checking they are noise.
    pub fn real_part(&self) -> QubitOperator {
        let mut out = QubitOperator {
            n_qubits: self.n_qubits,
            terms: self.terms.iter().map(|(p, c)| (*p, Complex64::new(c.re, 0.0))).collect(),
        };
        out.simplify();
        out
    }

    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::Resource(format!(
                "dense matrix of {} qubits exceeds guard {MAX_DENSE_QUBITS}",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for (p, c) in &self.terms {
            for b in 0..dim {
                let (ph, r) = p.apply_to_basis(b);
                m[(r, b)] += ph * c;
            }
        }
        Ok(m)
    }

    /// Applies the operator to a dense amplitude vector.
    pub fn apply(&self, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        if amps.len() != 1usize << self.n_qubits {
            return Err(Error::Dimension(format!(
                "vector of length {} for {}-qubit operator",
                amps.len(),
                self.n_qubits
            )));
        }
        let mut out = vec![Complex64::default(); amps.len()];
        for (p, c) in &self.terms {
            for (b, a) in amps.iter().enumerate() {
                let (ph, r) = p.apply_to_basis(b);
                out[r] += ph * c * a;
            }
        }
        Ok(out)
    }

    /// One term per line: `<re> <im> <IXYZ>`, qubit 0 leftmost.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (p, c) in &self.terms {
            s.push_str(&format!("{:e} {:e} {}\n", c.re, c.im, p));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<QubitOperator> {
        let mut op: Option<QubitOperator> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let c = Complex64::new(parse(fields[0])?, parse(fields[1])?);
            let p: PauliString = fields[2].parse()?;
            let target = op.get_or_insert_with(|| QubitOperator::zero(p.n_qubits()));
            if target.n_qubits != p.n_qubits() {
                return Err(Error::Dimension(format!("line {}: width changes", lineno + 1)));
            }
            target.add_term(p, c);
        }
        let mut op = op.ok_or_else(|| Error::Parse("no terms".into()))?;
        op.simplify();
        Ok(op)
    }
}

/// Adds operators on the same register, collecting identical strings.
pub fn op_sum(parts: &[QubitOperator]) -> Result<QubitOperator> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Domain("op_sum of no operators".into()))?;
    let mut out = QubitOperator::zero(first.n_qubits);
    for part in parts {
        if part.n_qubits != first.n_qubits {
            return Err(Error::Dimension(format!(
                "op_sum mixes {} and {} qubits",
                first.n_qubits, part.n_qubits
            )));
        }
        for (p, c) in &part.terms {
            out.add_term(*p, *c);
        }
    }
    out.simplify();
    Ok(out)
}

/// Product of two strings, `a · b = phase · result`.
pub fn pauli_product(a: &PauliString, b: &PauliString) -> Result<(Complex64, PauliString)> {
    a.mul(b)
}
