use thiserror::Error;

/// Errors raised by problem construction, solvers, the simulator and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("asymmetric sparsity: ({0}, {1}) declared without ({1}, {0})")]
    AsymmetricSparsity(usize, usize),

    #[error("declared sparsity omits the structural dependency between agents {0} and {1}")]
    MissingDependency(usize, usize),

    #[error("Slater point is not strictly feasible: g_{index}(xbar) = {value}")]
    SlaterViolation { index: usize, value: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("series too short: {len} samples, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("config {path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NotConverged { what: &'static str, iterations: u64, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { what, expected, got })
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
