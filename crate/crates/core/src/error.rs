use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid value for `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("infeasible specification: {0}")]
    Infeasible(String),

    #[error("calibration failed: target kappa {target:.4} unreachable (closest achieved {closest:.4} at sigma {sigma:.4})")]
    Calibration {
        target: f64,
        closest: f64,
        sigma: f64,
    },

    #[error("insufficient raters: need at least {required}, got {actual}")]
    InsufficientRaters { required: usize, actual: usize },

    #[error("unstable statistic: undefined in {failure_rate:.1}% of bootstrap iterations")]
    UnstableStatistic { failure_rate: f64 },

    #[error("incomplete sweep: {0}")]
    IncompleteSweep(String),

    #[error("unknown rater `{0}`")]
    UnknownRater(String),

    #[error("unknown record `{0}`")]
    UnknownRecord(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
