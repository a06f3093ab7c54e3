use std::path::PathBuf;

/// Errors raised by the solver and optimizer layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frequency {f} Hz outside absorption model coverage [{lo}, {hi}]")]
    Coverage { f: f64, lo: f64, hi: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("linear solver failed{}: {reason}", freq_context(*.frequency))]
    Solver {
        reason: String,
        frequency: Option<f64>,
        /// Relative residual of the last attempted solve, when one exists.
        residual: Option<f64>,
    },

    #[error("constraint infeasible: {0}")]
    Infeasible(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn freq_context(f: Option<f64>) -> String {
    match f {
        Some(f) => format!(" at {f} Hz"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn solver(reason: impl Into<String>) -> Self {
        Error::Solver {
            reason: reason.into(),
            frequency: None,
            residual: None,
        }
    }

    /// Attaches a frequency to solver failures so callers can report which
    /// sample of a sweep broke.
    pub fn at_frequency(self, f: f64) -> Self {
        match self {
            Error::Solver { reason, residual, .. } => Error::Solver {
                reason,
                frequency: Some(f),
                residual,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
