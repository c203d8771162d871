mod common;

use std::f64::consts::PI;

use common::{fd_gradient, fixture, max_abs_diff, two_local_configs};
use rand::Rng;
use vqebench::ansatz::{build_ansatz_circuit, shift_rule_gradient, uccsd_excitations, AnsatzSpec, GradientMode};
use vqebench::backend::{BackendConfig, Circuit, Estimator, Statevector};
use vqebench::fermion::Mapping;
use vqebench::moldata::build_hamiltonian;
use vqebench::rng::rng_for;

fn random_params(c: &Circuit, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 7);
    (0..c.n_params()).map(|_| rng.gen_range(-PI..PI)).collect()
}

fn shift(c: &Circuit, x: &[f64], op: &vqebench::pauli::QubitOperator, mode: GradientMode) -> Vec<f64> {
    let mut est = Estimator::new(BackendConfig::Statevector, 0);
    shift_rule_gradient(c, x, op, &mut est, mode).unwrap()
}

#[test]
fn exact_subgate_matches_finite_differences_for_uccsd() {
    for (dir, r) in [("h2", 0.7), ("lih", 1.6)] {
        let m = fixture(dir, r);
        for mapping in [Mapping::ParityReduced, Mapping::JordanWigner] {
            let h = build_hamiltonian(&m, mapping).unwrap();
            let c = build_ansatz_circuit(&AnsatzSpec::Uccsd, mapping, h.n_qubits(), m.n_electrons).unwrap();
            for seed in 0..10 {
                let x = random_params(&c, seed);
                let err = max_abs_diff(&shift(&c, &x, &h, GradientMode::ExactSubgate), &fd_gradient(&c, &x, &h, 1e-5));
                assert!(err <= 1e-6, "{dir} {mapping:?} seed {seed}: {err:e}");
            }
        }
    }
}

#[test]
fn exact_subgate_matches_finite_differences_for_two_local() {
    for (dir, r) in [("h2", 0.7), ("lih", 1.6)] {
        let m = fixture(dir, r);
        let h = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
        for spec in two_local_configs() {
            let c = build_ansatz_circuit(&AnsatzSpec::TwoLocal(spec.clone()), Mapping::ParityReduced, h.n_qubits(), m.n_electrons)
                .unwrap();
            for seed in 0..10 {
                let x = random_params(&c, seed);
                let exact = shift(&c, &x, &h, GradientMode::ExactSubgate);
                let err = max_abs_diff(&exact, &fd_gradient(&c, &x, &h, 1e-5));
                assert!(err <= 1e-6, "{dir} {spec:?} seed {seed}: {err:e}");
                // one rotation per slot: the two-term rule is already exact
                assert!(max_abs_diff(&exact, &shift(&c, &x, &h, GradientMode::NaiveTwoterm)) < 1e-12);
            }
        }
    }
}

#[test]
fn naive_two_term_misses_the_double_excitation() {
    let m = fixture("h2", 0.7);
    let h = build_hamiltonian(&m, Mapping::ParityReduced).unwrap();
    let c = build_ansatz_circuit(&AnsatzSpec::Uccsd, Mapping::ParityReduced, h.n_qubits(), 2).unwrap();
    let double = uccsd_excitations(4, 2).unwrap().singles.len();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let x = random_params(&c, seed);
        let fd = fd_gradient(&c, &x, &h, 1e-5);
        let naive = shift(&c, &x, &h, GradientMode::NaiveTwoterm);
        worst = worst.max((naive[double] - fd[double]).abs());
    }
    assert!(worst > 1e-2, "{worst}");
}

#[test]
fn excitation_rotations_conserve_particle_number() {
    // JW basis index popcount is the electron count
    for (dir, r) in [("h2", 0.7), ("lih", 1.6)] {
        let m = fixture(dir, r);
        let n = m.n_modes();
        let c = build_ansatz_circuit(&AnsatzSpec::Uccsd, Mapping::JordanWigner, n, m.n_electrons).unwrap();
        let x = random_params(&c, 3);
        let gates: Vec<(usize, usize, f64)> = c.parameterized_gates().collect();
        for slot in 0..c.n_params() {
            let group: Vec<usize> = gates.iter().filter(|g| g.1 == slot).map(|g| g.0).collect();
            for b in 0..1usize << n {
                let mut s = Statevector::basis(n, b).unwrap();
                for &g in &group {
                    let gate = &c.gates()[g];
                    s.apply_gate(gate, gate.angle().unwrap().value(&x));
                }
                let leak: f64 = s
                    .amplitudes()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i.count_ones() != b.count_ones())
                    .map(|(_, a)| a.norm_sqr())
                    .sum();
                assert!(leak < 1e-24, "{dir} slot {slot} basis {b}: {leak:e}");
            }
        }
    }
}
