use std::fmt;

/// CLI failure classes, each mapped to a fixed exit code:
/// validation 2, I/O 3, benchmark contract 4.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    BenchContract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::BenchContract(_) => 4,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::BenchContract(m) => write!(f, "{m}"),
        }
    }
}

impl From<mbvoc_core::Error> for CliError {
    fn from(e: mbvoc_core::Error) -> Self {
        match e {
            mbvoc_core::Error::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
