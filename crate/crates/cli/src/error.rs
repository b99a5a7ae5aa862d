use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("property failed: {0}")]
    Property(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// 0 success, 1 property failure, 2 argument or I/O error, 3 numeric
    /// failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Argument(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

impl From<edgebeam::Error> for CliError {
    fn from(e: edgebeam::Error) -> Self {
        use edgebeam::Error as E;
        match e {
            E::Io(io) => CliError::Io(io),
            E::NonFinite(_) | E::Solver(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Argument(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Argument(format!("invalid JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            other => CliError::Argument(format!("CSV error: {other:?}")),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
