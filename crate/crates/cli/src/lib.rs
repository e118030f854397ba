//! Library side of the command line front end: configuration, the
//! verification battery, convergence studies and characteristic-function
//! checks. The binary in `main.rs` is a thin dispatcher over these.

use thiserror::Error;

pub mod battery;
pub mod commands;
pub mod config;

/// Exit code for a clean run with all verdicts passing.
pub const EXIT_OK: i32 = 0;
/// Exit code when any verification verdict fails.
pub const EXIT_VERIFICATION_FAILED: i32 = 1;
/// Exit code for usage and validation errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for numeric/quadrature failures.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] gmflou_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Core(gmflou_core::Error::Numeric(_)) => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_USAGE,
        }
    }
}
