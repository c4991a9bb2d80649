//! Versioned JSON model persistence, pinned to the training vocabulary by
//! hash.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::targets::models::TrainedModel;
use crate::vocab::Vocabulary;

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: TrainedModel,
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    let file = ModelFile { version: MODEL_FILE_VERSION, model: model.clone() };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

/// Loads a model and verifies it was trained on `vocab`.
pub fn load_model(path: &Path, vocab: &Vocabulary) -> Result<TrainedModel, ModelError> {
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.version != MODEL_FILE_VERSION {
        return Err(ModelError::BadVersion(file.version));
    }
    let supplied = vocab.hash();
    if file.model.vocab_hash != supplied {
        return Err(ModelError::VocabHashMismatch { file: file.model.vocab_hash, supplied });
    }
    Ok(file.model)
}
