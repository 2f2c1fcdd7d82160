use saddleflow::dataio::DataError;
use saddleflow::diagnostics::DiagnosticsError;
use saddleflow::dynamics::DynamicsError;
use saddleflow::oracle::OracleError;
use saddleflow::svm::SvmError;
use thiserror::Error;

pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
    pub const IO: i32 = 5;
    pub const INVALID_DATA: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("integration failed: {0}")]
    Diverged(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) => exit::IO,
            CliError::InvalidData(_) => exit::INVALID_DATA,
            CliError::Diverged(_) => exit::NOT_CONVERGED,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            DataError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::InvalidData(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Divergence { .. } => CliError::Diverged(e.to_string()),
            DynamicsError::InvalidConfig(_) | DynamicsError::NonPositiveStep(_) | DynamicsError::InvalidTimeConstant { .. } => {
                CliError::Usage(e.to_string())
            }
            DynamicsError::OutsideOrthant { .. } => CliError::InvalidData(e.to_string()),
            DynamicsError::Problem(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SvmError> for CliError {
    fn from(e: SvmError) -> Self {
        CliError::InvalidData(e.to_string())
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Dynamics(d) => d.into(),
            _ => CliError::InvalidData(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooLarge { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}
