//! Config file loading and saving.
//!
//! Configs are JSON; absent fields take documented defaults, unknown keys
//! are rejected, and every invariant is checked before a config is handed
//! to the trainer.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::trainer::{TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Invalid(#[from] TrainError),
}

/// Parse and fully validate a config file.
pub fn load_config(path: &Path) -> Result<TrainConfig, ConfigError> {
    let bytes = fs::read(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: TrainConfig = serde_json::from_slice(&bytes).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

/// Write a config with all defaults made explicit.
pub fn save_config(path: &Path, config: &TrainConfig) -> Result<(), ConfigError> {
    let mut bytes = serde_json::to_vec_pretty(config).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}
