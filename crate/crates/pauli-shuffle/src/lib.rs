//! Quasiprobability simulation of noisy quantum circuits in the Pauli basis.
//!
//! This crate estimates observable expectation values of noisy circuits by
//! sampling Pauli-basis trajectories with signed weights, and analyzes the
//! resource measures that govern the sampling cost:
//!
//! - [`pauli`] / [`bloch`]: signed Pauli strings, Bloch-coefficient vectors,
//!   and conversions to dense Hermitian matrices.
//! - [`channel`]: Pauli transfer matrices for a library of named channels,
//!   composition, adjoints, and the channel cost measure.
//! - [`sampler`]: the Monte Carlo estimator itself with forward and backward
//!   propagation modes and Hoeffding sample budgets.
//! - [`magic`]: the negativity measure `D`, robustness `R` over the
//!   stabilizer polytope, state classification, and random-state censuses.
//! - [`oracle`]: slow dense-matrix evolution used to cross-check the sampler.
//! - [`circuit`]: the JSON circuit description consumed by the CLI.

pub mod bloch;
pub mod channel;
pub mod circuit;
pub mod error;
pub mod magic;
pub mod oracle;
pub mod pauli;
pub mod sampler;
pub mod simplex;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

// Keep the guide honest: every fenced Rust block in the book chapters
// compiles and runs as a doc-test of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pauli-frame.md")]
    mod pauli_frame {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/magic.md")]
    mod magic {}
    #[doc = include_str!("../../../book/src/circuits.md")]
    mod circuits {}
}
