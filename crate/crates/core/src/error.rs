//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the optical solver, synthesis, certification and
/// extraction stages.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter violated its domain (fractions outside (0,1),
    /// non-positive gains, and so on).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The closed-form solve has no solution for the given coefficients.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// A state-dependent quantity left its valid domain (for example a
    /// symplectic parameter below one, signalling broken shot-noise
    /// calibration).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Degenerate statistical input (zero variance, empty histogram).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Bit-level length mismatch in the extractor.
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// The leftover-hash bound admits no output bits for the requested
    /// configuration.
    #[error("no extractable output: {0}")]
    NoExtractableOutput(String),

    /// An analysis routine was handed less data than it needs.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A frequency fell outside the covered spectral range.
    #[error("frequency out of range: {0}")]
    FrequencyOutOfRange(String),

    /// Report assembly found stage outputs missing from a run directory.
    #[error("missing stage outputs: {}", .0.join(", "))]
    MissingStages(Vec<String>),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
