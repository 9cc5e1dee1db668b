use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("solver did not converge after {sweeps} sweeps (max coefficient change {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("degenerate test-statistic variance {0:e}")]
    DegenerateVariance(f64),

    #[error("truncation region carries negligible probability mass (log mass {0})")]
    DegenerateMass(f64),

    #[error("line sweep stagnated near z = {z} after {count} sub-threshold intervals")]
    Stagnation { z: f64, count: usize },
}

impl Error {
    /// Numerical failures of the engine, as opposed to bad user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::NotConverged { .. }
                | Error::DegenerateVariance(_)
                | Error::DegenerateMass(_)
                | Error::Stagnation { .. }
        )
    }
}
