//! Process exit codes.
//!
//! | code | meaning |
//! |-----:|---------|
//! | 0 | success |
//! | 1 | other failure (invalid input data, empty scene) |
//! | 2 | I/O error |
//! | 3 | parse error |
//! | 4 | invalid parameter |
//! | 5 | not found (object, vertex, camera, catalog material) |
//! | 6 | simulation diverged |
//! | 7 | unsupported file version |
//! | 8 | server failed to start |
//! | 64 | command-line usage error |

use meshsplat::Error;

use crate::server::ServerError;

pub const OK: i32 = 0;
pub const OTHER: i32 = 1;
pub const IO: i32 = 2;
pub const PARSE: i32 = 3;
pub const INVALID_PARAMETER: i32 = 4;
pub const NOT_FOUND: i32 = 5;
pub const DIVERGED: i32 = 6;
pub const UNSUPPORTED_VERSION: i32 = 7;
pub const SERVER_STARTUP: i32 = 8;
pub const USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                Error::Io { .. } => IO,
                Error::Parse { .. } => PARSE,
                Error::InvalidParameter(_) => INVALID_PARAMETER,
                Error::NotFound(_) | Error::CatalogMiss(_) => NOT_FOUND,
                Error::SimulationDiverged(_) => DIVERGED,
                Error::UnsupportedVersion { .. } => UNSUPPORTED_VERSION,
                Error::InvalidInput(_) | Error::EmptyScene => OTHER,
            },
            CliError::Server(_) => SERVER_STARTUP,
            CliError::Usage(_) => USAGE,
            CliError::Other(_) => OTHER,
        }
    }
}
