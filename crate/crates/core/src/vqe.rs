//! The VQE loop: ansatz energy through a backend, minimized by an optimizer.

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz_circuit, shift_rule_gradient, AnsatzSpec, GradientMode};
use crate::backend::{run_statevector, BackendConfig, Circuit, Estimator, Statevector};
use crate::error::{Error, Result};
use crate::exact::{default_filter, exact_ground_state, GroundState};
use crate::fermion::Mapping;
use crate::moldata::{build_hamiltonian, MolecularData};
use crate::optim::{minimize, Method, Objective, OptimizerOptions, OptimizerResult, Termination};
use crate::pauli::QubitOperator;
use crate::rng::derive_seed;

const OPTIMIZER_STREAM: u64 = 1;
const ESTIMATOR_STREAM: u64 = 2;
const FINAL_STREAM: u64 = 3;

/// Iteration cap used when measuring iterations to tolerance.
pub const TOLERANCE_RUN_CAP: usize = 10_000;

/// One VQE task. `seed` drives both optimizer randomness and shot sampling.
#[derive(Debug, Clone)]
pub struct VqeProblem {
    pub hamiltonian: QubitOperator,
    pub ansatz: AnsatzSpec,
    pub mapping: Mapping,
    pub n_electrons: usize,
    pub backend: BackendConfig,
    pub seed: u64,
}

impl VqeProblem {
    pub fn from_molecule(
        m: &MolecularData,
        mapping: Mapping,
        ansatz: AnsatzSpec,
        backend: BackendConfig,
        seed: u64,
    ) -> Result<Self> {
        Ok(VqeProblem {
            hamiltonian: build_hamiltonian(m, mapping)?,
            ansatz,
            mapping,
            n_electrons: m.n_electrons,
            backend,
            seed,
        })
    }

    pub fn circuit(&self) -> Result<Circuit> {
        let c = build_ansatz_circuit(&self.ansatz, self.mapping, self.hamiltonian.n_qubits(), self.n_electrons)?;
        if c.n_qubits() != self.hamiltonian.n_qubits() {
            return Err(Error::Dimension(format!(
                "ansatz acts on {} qubits, Hamiltonian on {}",
                c.n_qubits(),
                self.hamiltonian.n_qubits()
            )));
        }
        Ok(c)
    }

    /// Exact ground state of the same mapped operator, in the problem's sector.
    pub fn exact(&self) -> Result<GroundState> {
        exact_ground_state(&self.hamiltonian, default_filter(self.mapping, self.n_electrons))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeResult {
    pub energy: f64,
    pub params: Vec<f64>,
    pub method: Method,
    pub ansatz: AnsatzSpec,
    pub backend: BackendConfig,
    pub seed: u64,
    /// Energy estimates requested from the backend, gradient probes included.
    pub backend_calls: u64,
    pub optimizer: OptimizerResult,
}

/// Ansatz energy as an optimizer cost.
pub struct EnergyObjective<'a> {
    pub circuit: &'a Circuit,
    pub op: &'a QubitOperator,
    pub estimator: Estimator,
    /// Stop once the best energy is within this many Hartree of the value.
    pub target: Option<(f64, f64)>,
}

impl Objective for EnergyObjective<'_> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        self.estimator.energy(self.circuit, x, self.op)
    }

    /// Exact shift-rule gradient on the statevector tier. Sampled costs fall
    /// back to finite differences like any black-box cost.
    fn gradient(&mut self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        if !self.estimator.is_exact() {
            return None;
        }
        Some(shift_rule_gradient(self.circuit, x, self.op, &mut self.estimator, GradientMode::ExactSubgate))
    }

    fn shift_gradient(&mut self, x: &[f64], mode: GradientMode) -> Option<Result<Vec<f64>>> {
        Some(shift_rule_gradient(self.circuit, x, self.op, &mut self.estimator, mode))
    }

    fn should_stop(&self, best: f64) -> bool {
        self.target.is_some_and(|(e, tol)| (best - e).abs() <= tol)
    }
}

fn optimizer_options(p: &VqeProblem, opts: &OptimizerOptions) -> OptimizerOptions {
    OptimizerOptions { seed: derive_seed(p.seed, OPTIMIZER_STREAM), ..opts.clone() }
}

fn check_finite(r: &OptimizerResult) -> Result<()> {
    if r.termination == Termination::NonFiniteCost {
        return Err(Error::Numeric(format!("VQE aborted: {}", r.message)));
    }
    Ok(())
}

/// Runs VQE from all-zero parameters. On the sampled tier the reported
/// energy is a fresh estimate at the best parameters, so it is not biased
/// by selecting the lowest noisy value.
pub fn vqe_minimize(p: &VqeProblem, method: Method, opts: &OptimizerOptions) -> Result<VqeResult> {
    let circuit = p.circuit()?;
    if let BackendConfig::Sampled { noise: Some(n), .. } = &p.backend {
        n.validate(Some(circuit.n_qubits()))?;
    }
    let x0 = vec![0.0; circuit.n_params()];
    let mut obj = EnergyObjective {
        circuit: &circuit,
        op: &p.hamiltonian,
        estimator: Estimator::new(p.backend.clone(), derive_seed(p.seed, ESTIMATOR_STREAM)),
        target: None,
    };
    let r = minimize(method, &mut obj, &x0, &optimizer_options(p, opts))?;
    check_finite(&r)?;
    let backend_calls = obj.estimator.calls();
    let energy = if p.backend.is_exact() {
        r.best_value
    } else {
        Estimator::new(p.backend.clone(), derive_seed(p.seed, FINAL_STREAM)).energy(&circuit, &r.best_params, &p.hamiltonian)?
    };
    if !energy.is_finite() {
        return Err(Error::Numeric("final energy is not finite".into()));
    }
    Ok(VqeResult {
        energy,
        params: r.best_params.clone(),
        method,
        ansatz: p.ansatz.clone(),
        backend: p.backend.clone(),
        seed: p.seed,
        backend_calls,
        optimizer: r,
    })
}

/// Noiseless state prepared by the ansatz at `params`.
pub fn prepared_state(p: &VqeProblem, params: &[f64]) -> Result<Statevector> {
    run_statevector(&p.circuit()?, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceResult {
    pub iterations: usize,
    /// Backend energy evaluations, gradient probes included.
    pub evaluations: u64,
    pub reached: bool,
}

/// Iterations and evaluations until the energy is within `tol` (relative) of
/// the exact ground energy, with the iteration cap lifted to 10⁴.
pub fn iterations_to_tolerance(
    p: &VqeProblem,
    method: Method,
    opts: &OptimizerOptions,
    tol: f64,
) -> Result<ToleranceResult> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Domain("tolerance must be non-negative".into()));
    }
    let exact = p.exact()?.energy;
    let circuit = p.circuit()?;
    let x0 = vec![0.0; circuit.n_params()];
    let mut obj = EnergyObjective {
        circuit: &circuit,
        op: &p.hamiltonian,
        estimator: Estimator::new(p.backend.clone(), derive_seed(p.seed, ESTIMATOR_STREAM)),
        target: Some((exact, tol * exact.abs())),
    };
    let opts = OptimizerOptions { max_iter: Some(TOLERANCE_RUN_CAP), ..optimizer_options(p, opts) };
    let r = minimize(method, &mut obj, &x0, &opts)?;
    check_finite(&r)?;
    Ok(ToleranceResult {
        iterations: r.n_iterations,
        evaluations: obj.estimator.calls(),
        reached: r.termination == Termination::TargetReached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::expectation_exact;
    use crate::optim::GdConfig;

    fn toy() -> VqeProblem {
        // one spatial level pair with a hopping term, two electrons, JW
        let h = QubitOperator::from_labels(&[(-0.5, "ZIII"), (-0.5, "IZII"), (0.2, "XXXX"), (0.3, "ZZII")]).unwrap();
        VqeProblem {
            hamiltonian: h,
            ansatz: AnsatzSpec::Uccsd,
            mapping: Mapping::JordanWigner,
            n_electrons: 2,
            backend: BackendConfig::Statevector,
            seed: 3,
        }
    }

    #[test]
    fn zero_iterations_give_reference_energy() {
        let p = toy();
        let opts = OptimizerOptions { max_iter: Some(0), ..Default::default() };
        let r = vqe_minimize(&p, Method::Cg, &opts).unwrap();
        let hf = prepared_state(&p, &[0.0; 3]).unwrap();
        assert_eq!(r.energy, expectation_exact(&hf, &p.hamiltonian).unwrap());
    }

    #[test]
    fn infinite_tolerance_stops_at_first_evaluation() {
        let r = iterations_to_tolerance(&toy(), Method::Powell, &OptimizerOptions::default(), f64::INFINITY).unwrap();
        assert_eq!(r, ToleranceResult { iterations: 0, evaluations: 1, reached: true });
    }

    #[test]
    fn stationary_gd_never_reaches() {
        let opts = OptimizerOptions { gd: GdConfig { learning_rate: 0.0 }, tol: 0.0, ..Default::default() };
        let r = iterations_to_tolerance(&toy(), Method::Gd, &opts, 1e-6).unwrap();
        assert!(!r.reached);
        assert_eq!(r.iterations, TOLERANCE_RUN_CAP);
    }

    #[test]
    fn result_round_trips_through_json() {
        let r = vqe_minimize(&toy(), Method::Cobyla, &OptimizerOptions::default()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: VqeResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
