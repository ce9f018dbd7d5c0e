//! File formats: key=value configs, event/IMU/trajectory datasets, and map
//! exports (PFM depth, PGM16 surfaces, PLY point clouds).

pub mod config;
pub mod dataset;
pub mod maps;

pub use config::ConfigMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("missing key '{0}'")]
    MissingKey(String),
    #[error("key '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("bad file header: expected {expected}, got '{got}'")]
    BadHeader { expected: &'static str, got: String },
    #[error("truncated file: {0}")]
    Truncated(&'static str),
}
