use thiserror::Error;

/// Errors raised by the numerical kernels and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller passed something outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative routine failed to reach its tolerance.
    #[error("numeric failure: {message} (residual {residual:.3e})")]
    Numeric { message: String, residual: f64 },

    /// A size guard was exceeded before allocating.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A verification (theorem check, separability certificate, ...) did not pass.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit status for command-line front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Json(_) => EXIT_CONFIG,
            Error::Numeric { .. } => EXIT_NUMERIC,
            Error::Resource(_) => EXIT_RESOURCE,
            Error::Verification(_) => EXIT_VERIFICATION,
            Error::Io(_) => 1,
        }
    }
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

pub type Result<T> = std::result::Result<T, Error>;
