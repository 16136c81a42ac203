use anderson_dos::Error;
use thiserror::Error as ThisError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DIVERGENCE: i32 = 2;
    pub const CAPACITY: i32 = 3;
    pub const VALIDATION_FAILED: i32 = 4;
    pub const NUMERICAL: i32 = 5;
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error{}: {message}", field.as_ref().map(|f| format!(" at `{f}`")).unwrap_or_default())]
    Config {
        field: Option<String>,
        message: String,
    },
    #[error(transparent)]
    Compute(#[from] Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Io(_) => exit::CONFIG,
            CliError::ValidationFailed(_) => exit::VALIDATION_FAILED,
            CliError::Compute(e) => match e {
                Error::InvalidInput(_) | Error::Domain(_) | Error::Geometry(_) => exit::CONFIG,
                Error::Divergence { .. } => exit::DIVERGENCE,
                Error::Capacity(_) => exit::CAPACITY,
                Error::Quadrature { .. }
                | Error::Solver { .. }
                | Error::Sampling(_)
                | Error::Certificate { .. } => exit::NUMERICAL,
            },
        }
    }
}
