//! IO companion to `hypermap-core`: PGM/PNG rasters, dataset manifests,
//! checkpoint files and rayon-parallel scene drivers. The `hypermap` binary
//! wires these into the pipeline subcommands.

pub mod checkpoint;
pub mod dataset;
pub mod manifest;
pub mod parallel;
pub mod pgm;
pub mod pngio;

use std::path::PathBuf;

/// IO-layer error; wraps core errors so exit codes can be derived in one
/// place (0 ok, 2 input, 3 io, 4 numeric).
#[derive(Debug, thiserror::Error)]
pub enum HmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] hypermap_core::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("input error: {0}")]
    Input(String),
}

impl HmError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HmError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable exit-code contract for scripting.
    pub fn exit_code(&self) -> i32 {
        match self {
            HmError::Io { .. } => 3,
            HmError::Core(hypermap_core::Error::Numeric(_)) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HmError>;
