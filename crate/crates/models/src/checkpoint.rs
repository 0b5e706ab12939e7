//! Gzip-compressed JSON checkpoints: architecture, parameters, whitening and
//! provenance in one file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use oboe_core::datasets::FEATURE_VERSION;

use crate::{train::LossCurve, ModelError, Predictor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub feature_version: u32,
    pub config_hash: String,
    pub validation_loss: f64,
    pub curve: LossCurve,
    pub model: Predictor,
}

impl Checkpoint {
    pub fn new(model: Predictor, curve: LossCurve, config_hash: String) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            feature_version: FEATURE_VERSION,
            config_hash,
            validation_loss: curve.best_validation,
            curve,
            model,
        }
    }
}

fn err(path: &Path, message: impl ToString) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| err(path, e))?;
    }
    let file = File::create(path).map_err(|e| err(path, e))?;
    let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
    serde_json::to_writer(&mut enc, ckpt).map_err(|e| err(path, e))?;
    enc.finish().and_then(|mut w| w.flush()).map_err(|e| err(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let file = File::open(path).map_err(|e| err(path, e))?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(GzDecoder::new(file))).map_err(|e| err(path, e))?;
    if ckpt.version != CHECKPOINT_VERSION || ckpt.feature_version != FEATURE_VERSION {
        return Err(err(
            path,
            format!(
                "written by format {}/{}, this build reads {}/{}",
                ckpt.version, ckpt.feature_version, CHECKPOINT_VERSION, FEATURE_VERSION
            ),
        ));
    }
    Ok(ckpt)
}
