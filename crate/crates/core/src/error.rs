//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{node_count} nodes exceeds the exact-enumeration cap of {max}")]
    EnumerationLimit { node_count: usize, max: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Newton iteration ran out of steps; carries the last iterate so callers
    /// can inspect how far the optimization got.
    #[error("no convergence after {iterations} Newton steps (gradient norm {grad_norm:.3e})")]
    NoConvergence {
        iterations: usize,
        grad_norm: f64,
        last_mean: Vec<f64>,
    },

    #[error("graph column {column} has zero variance")]
    DegenerateColumn { column: usize },

    #[error("empty raster: no events fall inside the requested range")]
    EmptyRaster,

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("at time bin {time_index}: {source}")]
    AtTime {
        time_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub fn dims(message: impl Into<String>) -> Self {
        Error::DimensionMismatch(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric(message.into())
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Tag an error with the time bin it occurred in. Errors already carrying
    /// a time index keep the innermost one.
    pub fn at_time(self, time_index: usize) -> Self {
        match self {
            Error::AtTime { .. } => self,
            other => Error::AtTime {
                time_index,
                source: Box::new(other),
            },
        }
    }

    /// Time bin the error is associated with, if any.
    pub fn time_index(&self) -> Option<usize> {
        match self {
            Error::AtTime { time_index, .. } => Some(*time_index),
            _ => None,
        }
    }

    /// True for failures of the numerics themselves (as opposed to bad inputs
    /// or I/O); the CLI maps these to a dedicated exit code.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_) | Error::NoConvergence { .. } | Error::DegenerateColumn { .. } => {
                true
            }
            Error::AtTime { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
