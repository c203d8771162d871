//! Shared inputs for the criterion benches.

use vqebench::ansatz::AnsatzSpec;
use vqebench::backend::BackendConfig;
use vqebench::fermion::Mapping;
use vqebench::moldata::bundled_series;
use vqebench::vqe::VqeProblem;

/// Bundled molecule at the grid point nearest `r` (Å).
pub fn problem(molecule: &str, r: f64, ansatz: AnsatzSpec, backend: BackendConfig) -> VqeProblem {
    let series = bundled_series(molecule).expect("bundled series");
    let m = series
        .points()
        .iter()
        .min_by(|a, b| (a.geometry_param - r).abs().total_cmp(&(b.geometry_param - r).abs()))
        .expect("non-empty series");
    VqeProblem::from_molecule(m, Mapping::ParityReduced, ansatz, backend, 0).expect("valid fixture")
}
