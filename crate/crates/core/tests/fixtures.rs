use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use vqebench::backend::{expectation_exact, Statevector};
use vqebench::exact::{default_filter, exact_ground_state, ParticleFilter};
use vqebench::fermion::{hf_reference, jordan_wigner, FermionOperator, Mapping};
use vqebench::moldata::{
    build_dipole, build_hamiltonian, bundled_fixtures_dir, bundled_series, electronic_fermion_operator,
    load_moldata, Axis, MolecularData,
};

fn fixture(dir: &str, r: f64) -> MolecularData {
    let path: PathBuf = bundled_fixtures_dir().join(dir).join(format!("{dir}_{r:.2}.json"));
    load_moldata(&path).unwrap()
}

fn hf_energy_of(m: &MolecularData, mapping: Mapping) -> f64 {
    let h = build_hamiltonian(m, mapping).unwrap();
    let idx = hf_reference(m.n_modes(), m.n_electrons, mapping).unwrap();
    expectation_exact(&Statevector::basis(h.n_qubits(), idx).unwrap(), &h).unwrap()
}

#[test]
fn h2_equilibrium_reproduces_recorded_energies() {
    let m = fixture("h2", 0.7);
    for mapping in [Mapping::JordanWigner, Mapping::ParityReduced] {
        let h = build_hamiltonian(&m, mapping).unwrap();
        let filter = Some(ParticleFilter { n_electrons: 2, mapping });
        let gs = exact_ground_state(&h, filter).unwrap();
        assert!((gs.energy - m.fci_energy.unwrap()).abs() < 1e-8, "{mapping:?} {}", gs.energy);
        assert!((hf_energy_of(&m, mapping) - m.hf_energy.unwrap()).abs() < 1e-8);
    }
}

#[test]
fn h2_parity_reduced_has_identity_and_zz_terms() {
    let m = fixture("h2", 0.7);
    let h = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
    assert_eq!(h.n_qubits(), 2);
    assert!(h.identity_coefficient().re < 0.0);
    assert!(h.iter().any(|(p, c)| p.to_string() == "ZZ" && c.re.abs() > 1e-3));
    let jw = build_hamiltonian(&m, Mapping::JordanWigner).unwrap();
    assert_eq!(jw.n_qubits(), 4);
    // electronic identity coefficient, comparable to the textbook -0.81 value
    let electronic = jw.identity_coefficient().re - m.core_energy;
    assert!((electronic + 0.81261).abs() < 0.1, "{electronic}");
}

#[test]
fn qubit_counts_follow_active_spaces() {
    for (dir, r, jw, reduced) in [
        ("h2", 0.7, 4, 2),
        ("lih", 1.6, 6, 4),
        ("beh2", 1.3, 8, 6),
        ("h2o", 1.0, 10, 8),
        ("hf", 0.95, 12, 10),
    ] {
        let m = fixture(dir, r);
        let h = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
        assert_eq!(h.n_qubits(), reduced, "{dir}");
        assert_eq!(Mapping::JordanWigner.n_qubits(m.n_modes()), jw);
        assert_eq!(h.max_imag(), 0.0);
    }
}

#[test]
fn lih_exact_below_hartree_fock_and_dipole_matches_fci() {
    let m = fixture("lih", 1.6);
    let h = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
    let gs = exact_ground_state(&h, default_filter(Mapping::ParityReduced, m.n_electrons)).unwrap();
    assert!(gs.energy < m.hf_energy.unwrap());
    assert!((gs.energy - m.fci_energy.unwrap()).abs() < 1e-8);
    let d = build_dipole(&m, Mapping::ParityReduced, Axis::Z).unwrap();
    let s = Statevector::from_amplitudes(gs.vector).unwrap();
    let mu = expectation_exact(&s, &d).unwrap();
    assert!((mu - m.fci_dipole.unwrap()[2]).abs() < 1e-6, "{mu}");
}

#[test]
fn h2_dipole_vanishes() {
    for r in [0.5, 0.7, 1.5] {
        let m = fixture("h2", r);
        let h = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
        let d = build_dipole(&m, Mapping::ParityReduced, Axis::Z).unwrap();
        let gs = exact_ground_state(&h, default_filter(Mapping::ParityReduced, m.n_electrons)).unwrap();
        let s = Statevector::from_amplitudes(gs.vector).unwrap();
        // the bundled geometry places the first atom at the origin, so the
        // total (not origin-independent) dipole of a neutral symmetric molecule is zero
        assert!(expectation_exact(&s, &d).unwrap().abs() < 1e-8);
    }
}

#[test]
fn reduced_and_sector_restricted_jw_agree() {
    for (dir, r) in [("h2", 0.7), ("h2", 2.5), ("lih", 1.6), ("lih", 3.0)] {
        let m = fixture(dir, r);
        let jw = build_hamiltonian(&m, Mapping::JordanWigner).unwrap();
        let red = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
        let f = ParticleFilter { n_electrons: m.n_electrons, mapping: Mapping::JordanWigner };
        let e_jw = exact_ground_state(&jw, Some(f)).unwrap().energy;
        let e_red = exact_ground_state(&red, default_filter(Mapping::ParityReduced, m.n_electrons)).unwrap().energy;
        assert!((e_jw - e_red).abs() < 1e-10, "{dir} {r}: {e_jw} vs {e_red}");
    }
}

#[test]
fn hamiltonian_commutes_with_number_operator() {
    for (dir, r) in [("h2", 0.7), ("lih", 1.6)] {
        let m = fixture(dir, r);
        let h = build_hamiltonian(&m, Mapping::JordanWigner).unwrap().to_matrix().unwrap();
        let n = jordan_wigner(&FermionOperator::number(m.n_modes())).to_matrix().unwrap();
        let comm = &h * &n - &n * &h;
        assert!(comm.camax() < 1e-10, "{dir}");
        let adj: DMatrix<Complex64> = h.adjoint();
        assert!((&adj - &h).camax() < 1e-12);
    }
}

#[test]
fn dropping_two_body_terms_matches_orbital_sum() {
    // with h2 = 0 the ground energy is the sum of the lowest one-body levels
    let mut m = fixture("lih", 1.6);
    m.h2.iter_mut().for_each(|v| *v = 0.0);
    let h = build_hamiltonian(&m, Mapping::JordanWigner).unwrap();
    let f = ParticleFilter { n_electrons: m.n_electrons, mapping: Mapping::JordanWigner };
    let e = exact_ground_state(&h, Some(f)).unwrap().energy;
    let n = m.n_spatial;
    let h1 = DMatrix::from_row_slice(n, n, &m.h1);
    let mut levels: Vec<f64> = h1.symmetric_eigen().eigenvalues.iter().copied().collect();
    levels.sort_by(f64::total_cmp);
    let mut spin_levels: Vec<f64> = levels.iter().flat_map(|&l| [l, l]).collect();
    spin_levels.truncate(m.n_electrons);
    let want = m.core_energy + spin_levels.iter().sum::<f64>();
    assert!((e - want).abs() < 1e-10, "{e} vs {want}");
}

#[test]
fn every_fixture_matches_recorded_references() {
    for dir in ["h2", "lih", "beh2", "h2o", "hf"] {
        let series = bundled_series(dir).unwrap();
        for m in series.points() {
            assert!((hf_energy_of(m, Mapping::ParityReduced) - m.hf_energy.unwrap()).abs() < 1e-8);
            if m.n_modes() <= 10 {
                let h = build_hamiltonian(m, Mapping::ParityReduced).unwrap();
                let e = exact_ground_state(&h, default_filter(Mapping::ParityReduced, m.n_electrons)).unwrap().energy;
                assert!((e - m.fci_energy.unwrap()).abs() < 1e-7, "{dir} {}", m.geometry_param);
            }
        }
    }
}

#[test]
fn bundled_grids() {
    let h2 = bundled_series("h2").unwrap();
    assert_eq!(h2.len(), 40);
    assert!((h2.points()[0].geometry_param - 0.1).abs() < 1e-12);
    assert!((h2.points()[39].geometry_param - 4.0).abs() < 1e-12);
    assert_eq!(bundled_series("lih").unwrap().len(), 40);
    assert_eq!(bundled_series("beh2").unwrap().len(), 5);
    let fermion = electronic_fermion_operator(&h2.points()[6]).unwrap();
    assert_eq!(fermion.n_modes(), 4);
}
