use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("undeclared {kind} `{name}`")]
    UndeclaredReference { kind: &'static str, name: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("rate of reaction `{reaction}` evaluated to {value} (state must give a finite, non-negative rate)")]
    RateEvaluation { reaction: String, value: f64 },

    #[error("integration failed at t = {time} h: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("fixed point search did not converge (best residual {best_residual:e})")]
    ConvergenceFailure { best_residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("query time {time} h is outside the recorded horizon [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("ensemble format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Coarse category used by front ends to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_)
            | Error::Syntax { .. }
            | Error::UndeclaredReference { .. }
            | Error::InvalidNetwork(_)
            | Error::InvalidQuery(_)
            | Error::OutOfRange { .. } => ErrorCategory::Config,
            Error::RateEvaluation { .. }
            | Error::IntegrationFailure { .. }
            | Error::ConvergenceFailure { .. }
            | Error::Numerical(_) => ErrorCategory::Numerical,
            Error::Format(_) | Error::Io(_) => ErrorCategory::Io,
            Error::Run { source, .. } => source.category(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Io,
}
