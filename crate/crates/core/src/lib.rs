//! Bias-free source-independent QRNG toolkit.
//!
//! Models the unbalanced interferometer and homodyne measurement chain of a
//! vacuum-fluctuation QRNG, solves the bias-cancelling operating points,
//! synthesizes and quantizes detector traces, certifies extractable
//! randomness against an untrusted source, and extracts final bits with a
//! seeded Toeplitz hasher.

pub mod bitstream;
pub mod config;
pub mod entropy;
pub mod error;
pub mod extractor;
pub mod optical;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
