//! Library surface of the command-line front end, exposed so integration
//! tests can drive the same pipelines the binary runs.

pub mod commands;
pub mod config;
pub mod presets;
pub mod provenance;

use powerprior::Error;

/// Process exit codes: 0 success, 2 configuration error, 3 diagnostics-gate
/// failure, 4 numerical failure.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::DimensionMismatch(_)
        | Error::Unsupported(_)
        | Error::Io(_)
        | Error::Csv(_) => 2,
        Error::DiagnosticsGate(_) => 3,
        Error::Numerical(_)
        | Error::QuadratureNonConvergence { .. }
        | Error::BridgeNonConvergence(_)
        | Error::NonFiniteWeights(_)
        | Error::OutsideSupport(_)
        | Error::DictionaryRange { .. } => 4,
    }
}
