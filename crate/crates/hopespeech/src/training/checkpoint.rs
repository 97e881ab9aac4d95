//! Checkpoint persistence: a directory holding a JSON config snapshot
//! and the full weight set, written atomically (to a temporary sibling,
//! then swapped in) so a crashed run never leaves a half-written
//! checkpoint behind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::backbone::BackboneConfig;
use crate::classifier::weights::{read_tensors, write_tensors, WeightsError};
use crate::classifier::{build_model, BackboneSource, HyperParams, Model};

/// Bumped when the on-disk layout changes incompatibly.
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint config not found: {0}")]
    ConfigMissing(PathBuf),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint config {path} does not parse: {detail}")]
    ConfigParse { path: PathBuf, detail: String },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(
        "hidden size mismatch: run config expects {requested}, checkpoint stores {stored}"
    )]
    HiddenSizeMismatch { requested: usize, stored: usize },
    #[error("checkpoint weights do not match the stored config: {0}")]
    TensorMismatch(String),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("checkpoint config is invalid: {0}")]
    InvalidConfig(String),
}

/// The JSON snapshot stored next to the weights.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointConfig {
    format_version: u32,
    hyper: HyperParams,
    backbone: BackboneConfig,
}

/// Writes the model (config + all weights) into `dir`, atomically.
pub fn save_checkpoint(model: &mut Model, dir: &Path) -> Result<(), CheckpointError> {
    let staging = dir.with_extension("tmp");
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|source| CheckpointError::Io {
            path: staging.clone(),
            source,
        })?;
    }
    std::fs::create_dir_all(&staging).map_err(|source| CheckpointError::Io {
        path: staging.clone(),
        source,
    })?;

    let config = CheckpointConfig {
        format_version: FORMAT_VERSION,
        hyper: model.params.clone(),
        backbone: model.backbone.config.clone(),
    };
    let config_json = serde_json::to_string_pretty(&config).expect("config serializes");
    std::fs::write(staging.join("config.json"), config_json).map_err(|source| {
        CheckpointError::Io {
            path: staging.join("config.json"),
            source,
        }
    })?;
    let tensors = model.to_tensors();
    write_tensors(&staging.join("weights.bin"), &tensors)?;

    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|source| CheckpointError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::rename(&staging, dir).map_err(|source| CheckpointError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Loads a checkpoint back into a model. When `expected` carries the
/// run's hyperparameters, the stored hidden size must agree — the error
/// names both sizes. The rebuilt model's eval-mode forward agrees
/// bitwise with the saved one; the dropout stream restarts from the
/// stored seed.
pub fn load_checkpoint(
    dir: &Path,
    expected: Option<&HyperParams>,
) -> Result<Model, CheckpointError> {
    let config_path = dir.join("config.json");
    if !config_path.exists() {
        return Err(CheckpointError::ConfigMissing(config_path));
    }
    let raw = std::fs::read_to_string(&config_path).map_err(|source| CheckpointError::Io {
        path: config_path.clone(),
        source,
    })?;
    let config: CheckpointConfig =
        serde_json::from_str(&raw).map_err(|e| CheckpointError::ConfigParse {
            path: config_path.clone(),
            detail: e.to_string(),
        })?;
    if config.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: config.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if let Some(expected) = expected {
        if expected.hidden_size != config.hyper.hidden_size {
            return Err(CheckpointError::HiddenSizeMismatch {
                requested: expected.hidden_size,
                stored: config.hyper.hidden_size,
            });
        }
    }
    let mut model = build_model(
        &config.hyper,
        &BackboneSource::Fresh(config.backbone.clone()),
    )
    .map_err(|e| CheckpointError::InvalidConfig(e.to_string()))?;
    let tensors = read_tensors(&dir.join("weights.bin"))?;
    model
        .load_tensors(&tensors)
        .map_err(CheckpointError::TensorMismatch)?;
    Ok(model)
}
