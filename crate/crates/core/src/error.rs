//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, estimation and sampling routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input shapes do not line up (observation counts, covariate rows, parameter dimension).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter value lies outside the support of its model family.
    #[error("parameter outside support: {0}")]
    OutsideSupport(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical routine produced a non-finite or degenerate result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge within {subdivisions} subdivisions (error estimate {error:.3e})")]
    QuadratureNonConvergence { subdivisions: usize, error: f64 },

    /// The iterative bridge-sampling update did not stabilise.
    #[error("bridge iteration did not converge after {0} iterations")]
    BridgeNonConvergence(usize),

    /// Non-finite importance weights encountered while bridging.
    #[error("bridge sampling produced {0} non-finite weights")]
    NonFiniteWeights(usize),

    /// MCMC convergence diagnostics failed the acceptance gate.
    #[error("diagnostics gate failed: {0}")]
    DiagnosticsGate(String),

    /// Lookup outside the tabulated dictionary range.
    #[error("dictionary lookup out of range: a0 = {requested} not in [{min}, {max}]")]
    DictionaryRange { requested: f64, min: f64, max: f64 },

    /// The requested operation is not available for this model family.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
