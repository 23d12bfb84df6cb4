use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where and why a simulation step produced non-finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// Simulated time at the start of the failing substep.
    pub time: f64,
    pub substep: usize,
    /// First constraint whose projection produced a non-finite multiplier, if any.
    pub constraint: Option<usize>,
    /// First vertex with a non-finite position.
    pub vertex: Option<usize>,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t={:.6}s substep={}", self.time, self.substep)?;
        if let Some(c) = self.constraint {
            write!(f, " constraint={c}")?;
        }
        if let Some(v) = self.vertex {
            write!(f, " vertex={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("scene contains no kernels")]
    EmptyScene,

    #[error("material `{0}` is not in the catalog")]
    CatalogMiss(String),

    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("simulation diverged at {0}")]
    SimulationDiverged(Divergence),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
