//! Constructive Franks-lemma machinery for Poisson maps and Hamiltonian flows
//! on `R^{2d+n}` with the canonical constant-rank structure.

pub mod bump;
pub mod error;
pub mod factorization;
pub mod flow;
pub mod flowbox;
pub mod hamiltonian;
pub mod io;
pub mod norms;
pub mod poisson;
pub mod realization;
pub mod report;
pub mod suites;

pub use error::{FranksError, Result};
