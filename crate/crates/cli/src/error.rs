use std::io;

use thiserror::Error;

use cycle_funnel::{Error as CoreError, ErrorKind};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration, or states.
    #[error("{0}")]
    Input(String),
    /// The numerics found no root, no feasible control, or no overlap.
    #[error("{0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Input(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 2,
        }
    }
}

/// Classifies a library error by whether the caller or the numerics are at
/// fault.
pub fn core<E: Into<CoreError>>(e: E) -> CliError {
    let e: CoreError = e.into();
    match e.kind() {
        ErrorKind::Input => CliError::Input(e.to_string()),
        ErrorKind::Numerical => CliError::Numerical(e.to_string()),
    }
}
