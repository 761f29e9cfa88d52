use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The data carries no information for the requested quantity
    /// (zero denominators, too few samples).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical check failed beyond its tolerance (unphysical matrix).
    #[error("numerical domain error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
macro_rules! degenerate {
    ($($arg:tt)*) => { $crate::error::Error::Degenerate(format!($($arg)*)) };
}
pub(crate) use degenerate;
pub(crate) use domain;
