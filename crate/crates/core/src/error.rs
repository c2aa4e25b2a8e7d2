use std::path::PathBuf;

/// Errors produced anywhere in the fitting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid distribution or prior parameters.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A factorization or other numerical routine failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Problems with the input data (constant columns, missing values, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
