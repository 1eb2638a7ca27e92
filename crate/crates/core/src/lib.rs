//! Random-circuit cross-entropy benchmarking laboratory.
//!
//! Exact simulation of random circuits, the partition-based spoofing
//! algorithms, and the diffusion-reaction model that predicts average XEB
//! and fidelity for ideal, noisy and gate-omitted circuits.

pub mod circuits;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod simulator;
pub mod spoofer;
pub mod drmodel;
pub mod ising1d;

pub use error::{Error, Result};
