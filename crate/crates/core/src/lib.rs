pub mod ansatz;
pub mod backend;
pub mod bench;
pub mod error;
pub mod exact;
pub mod fermion;
pub mod moldata;
pub mod optim;
pub mod pauli;
pub mod rng;
pub mod vqe;

pub use error::{Error, Result};
