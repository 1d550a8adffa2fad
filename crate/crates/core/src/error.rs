use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// An operation was asked for inputs outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver stopped before reaching its target residual.
    #[error("solver stopped after {iterations} iterations: residual {residual:.3e} > target {target:.3e}{hint}")]
    Solver {
        iterations: usize,
        residual: f64,
        target: f64,
        hint: String,
    },

    /// A dense operation was requested on a problem above its size cap.
    #[error("size error: {0}")]
    Size(String),

    /// A run configuration failed schema validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// Exit status for the CLI: 2 for usage/schema problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
