//! Dense exact diagonalization used as the reference energy.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fermion::{alpha_count, occupation_to_index, Mapping, OccupationState};
use crate::pauli::{QubitOperator, MAX_DENSE_QUBITS};

/// Restricts diagonalization to one particle-number sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParticleFilter {
    pub n_electrons: usize,
    pub mapping: Mapping,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    /// Full 2^n amplitude vector, zero outside the selected sector.
    pub vector: Vec<Complex64>,
}

/// Basis indices spanning the requested sector. The reduced parity space
/// fixes only electron-number parities, so it is filtered as well; there the
/// α count is pinned to the value the reduction assumed.
fn sector_basis(n_qubits: usize, filter: Option<ParticleFilter>) -> Result<Vec<usize>> {
    let Some(ParticleFilter { n_electrons, mapping }) = filter else {
        return Ok((0..1usize << n_qubits).collect());
    };
    let n_modes = match mapping {
        Mapping::JordanWigner => n_qubits,
        Mapping::ParityReduced => n_qubits + 2,
    };
    let half = n_modes / 2;
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << n_modes) {
        if bits.count_ones() as usize != n_electrons {
            continue;
        }
        if mapping == Mapping::ParityReduced
            && (bits & ((1u64 << half) - 1)).count_ones() as usize != alpha_count(n_electrons)
        {
            continue;
        }
        out.push(occupation_to_index(OccupationState::new(n_modes, bits), mapping));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn exact_ground_state(op: &QubitOperator, filter: Option<ParticleFilter>) -> Result<GroundState> {
    let n = op.n_qubits();
    if n > MAX_DENSE_QUBITS {
        return Err(Error::Resource(format!(
            "exact diagonalization limited to {MAX_DENSE_QUBITS} qubits, got {n}"
        )));
    }
    if op.max_imag() > 1e-10 {
        return Err(Error::Domain("operator is not Hermitian".into()));
    }
    let basis = sector_basis(n, filter)?;
    if basis.is_empty() {
        return Err(Error::Domain("particle sector is empty".into()));
    }
    let pos: HashMap<usize, usize> = basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let m = basis.len();
    let mut h = DMatrix::<Complex64>::zeros(m, m);
    for (col, &b) in basis.iter().enumerate() {
        for (p, &c) in op.iter() {
            let (phase, b2) = p.apply_to_basis(b);
            if let Some(&row) = pos.get(&b2) {
                h[(row, col)] += c * phase;
            }
        }
    }
    let real = h.iter().all(|z| z.im.abs() < 1e-14);
    let (energy, local): (f64, Vec<Complex64>) = if real {
        let hr = h.map(|z| z.re);
        let eig = SymmetricEigen::new(hr);
        let k = argmin(eig.eigenvalues.as_slice());
        (
            eig.eigenvalues[k],
            eig.eigenvectors.column(k).iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    } else {
        let eig = SymmetricEigen::new(h);
        let k = argmin(eig.eigenvalues.as_slice());
        (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect())
    };
    if !energy.is_finite() {
        return Err(Error::Numeric("eigensolver returned a non-finite energy".into()));
    }
    let mut vector = vec![Complex64::new(0.0, 0.0); 1usize << n];
    for (i, &b) in basis.iter().enumerate() {
        vector[b] = local[i];
    }
    Ok(GroundState { energy, vector })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Sector filter for an operator built with `mapping` from an `n_electrons` problem.
pub fn default_filter(mapping: Mapping, n_electrons: usize) -> Option<ParticleFilter> {
    Some(ParticleFilter { n_electrons, mapping })
}
