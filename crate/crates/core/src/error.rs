use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The prototype cutoff search failed to drive the band-edge
    /// power-complementarity residual below tolerance.
    #[error("prototype cutoff search did not converge: best residual {residual:.3e} after {iterations} iterations")]
    DesignNotConverged { residual: f64, iterations: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("parameter container: {0}")]
    ParamsFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
