use thiserror::Error;

/// Errors raised by the reduction and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("system is not asymptotically stable: {0}")]
    Unstable(String),

    #[error("singular step matrix (I - dt*A) for dt = {dt}")]
    SingularStep { dt: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The leading block of a balanced realization is not stable at the
    /// requested order; the caller should pick another order.
    #[error("leading {nr}x{nr} block is unstable; choose a different reduced order")]
    Split { nr: usize },

    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("time {t} outside of range [{start}, {end}]")]
    Range { t: f64, start: f64, end: f64 },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    /// Failure inside a simulation step.
    #[error("at {timestamp}: {source}")]
    At {
        timestamp: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, past any step context.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
