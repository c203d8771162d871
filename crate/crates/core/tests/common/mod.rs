#![allow(dead_code)]

use vqebench::ansatz::{Entanglement, Entangler, Rotation, TwoLocalSpec};
use vqebench::backend::{BackendConfig, Circuit, Estimator};
use vqebench::moldata::{bundled_fixtures_dir, load_moldata, MolecularData};
use vqebench::pauli::QubitOperator;

pub fn fixture(dir: &str, r: f64) -> MolecularData {
    load_moldata(&bundled_fixtures_dir().join(dir).join(format!("{dir}_{r:.2}.json"))).unwrap()
}

/// Central differences of the statevector energy.
pub fn fd_gradient(c: &Circuit, params: &[f64], op: &QubitOperator, h: f64) -> Vec<f64> {
    let mut est = Estimator::new(BackendConfig::Statevector, 0);
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            x[i] = params[i] + h;
            let plus = est.energy(c, &x, op).unwrap();
            x[i] = params[i] - h;
            let minus = est.energy(c, &x, op).unwrap();
            x[i] = params[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Every TwoLocal shape the CLI can express with one or two repetitions.
pub fn two_local_configs() -> Vec<TwoLocalSpec> {
    let mut out = Vec::new();
    for rotation_blocks in [vec![Rotation::Ry], vec![Rotation::H, Rotation::Ry]] {
        for entangler in [Entangler::Cz, Entangler::Cnot] {
            for entanglement in [Entanglement::Linear, Entanglement::Full] {
                for reps in [1, 2] {
                    out.push(TwoLocalSpec { rotation_blocks: rotation_blocks.clone(), entangler, entanglement, reps });
                }
            }
        }
    }
    out
}
