use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the statistical routines and the file layer.
#[derive(Debug, Error)]
pub enum Error {
    /// The centered genotype vector has no variance (X'X = 0).
    #[error("variant is monomorphic (X'X = 0)")]
    MonomorphicVariant,

    /// Y'Y (or the error SSCP) is singular or not positive definite.
    #[error("trait matrix is degenerate: {0}")]
    DegenerateTraits(String),

    #[error("quadratic form has no positive eigenvalue")]
    DegenerateDistribution,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("covariate matrix is rank deficient: {0}")]
    SingularCovariates(String),

    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: schema mismatch: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Short machine-friendly tag, used in the `reason` column of scan output.
    pub fn reason_tag(&self) -> &'static str {
        match self {
            Error::MonomorphicVariant => "monomorphic",
            Error::DegenerateTraits(_) => "degenerate_traits",
            Error::DegenerateDistribution => "degenerate_distribution",
            Error::NumericalFailure(_) => "numerical_failure",
            Error::SingularCovariates(_) => "singular_covariates",
            Error::InvalidDesign(_) => "invalid_design",
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse { .. } => "parse_error",
            Error::Schema { .. } => "schema_error",
            Error::Io { .. } => "io_error",
            Error::Config(_) => "config_error",
        }
    }
}
