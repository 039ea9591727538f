//! Versioned model checkpoints.
//!
//! A checkpoint is a JSON file holding the model config, the vocabulary
//! in token-id order, the optimizer step count, and every learnable
//! tensor keyed by its canonical name (the names `for_each_tensor`
//! yields). Storing tensors by name keeps files readable and lets the
//! loader verify that file and model agree exactly — a missing, extra,
//! or wrongly sized tensor is an error, never a silent partial load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ModelConfig, ModelParams};
use crate::text::vocab::Vocabulary;
use crate::Real;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    step: u64,
    config: ModelConfig,
    /// Tokens in id order.
    vocab: Vec<String>,
    tensors: BTreeMap<String, Vec<Real>>,
}

/// Saves the model, its vocabulary, and the training step to `path`.
pub fn save_checkpoint(
    params: &ModelParams,
    vocab: &Vocabulary,
    step: u64,
    path: &Path,
) -> Result<()> {
    if vocab.len() != params.vocab_size() {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} tokens but the embedding table has {} rows",
            vocab.len(),
            params.vocab_size()
        )));
    }
    let mut tensors = BTreeMap::new();
    params.for_each_tensor(|name, data| {
        tensors.insert(name.to_string(), data.to_vec());
    });
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        step,
        config: params.config,
        vocab: vocab.tokens().to_vec(),
        tensors,
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

/// Loads a checkpoint, reconstructing the exact model that was saved.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Vocabulary, u64)> {
    let text = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            file: path.display().to_string(),
            found: file.version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let vocab = Vocabulary::from_tokens(file.vocab)?;

    // build a skeleton of the right shapes, then overwrite every tensor
    let mut params = ModelParams::init(
        file.config,
        vocab.len(),
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let mut missing = Vec::new();
    let mut used = 0usize;
    let mut fill_error: Option<Error> = None;
    params.for_each_tensor_mut(|name, data| {
        if fill_error.is_some() {
            return;
        }
        match file.tensors.get(name) {
            None => missing.push(name.to_string()),
            Some(stored) if stored.len() != data.len() => {
                fill_error = Some(Error::Checkpoint(format!(
                    "tensor {name} has {} values, expected {}",
                    stored.len(),
                    data.len()
                )));
            }
            Some(stored) => {
                data.copy_from_slice(stored);
                used += 1;
            }
        }
    });
    if let Some(e) = fill_error {
        return Err(e);
    }
    if !missing.is_empty() {
        return Err(Error::Checkpoint(format!(
            "missing tensors: {}",
            missing.join(", ")
        )));
    }
    if used != file.tensors.len() {
        let known: Vec<String> = {
            let mut names = Vec::new();
            params.for_each_tensor(|name, _| names.push(name.to_string()));
            names
        };
        let extras: Vec<&str> = file
            .tensors
            .keys()
            .filter(|k| !known.iter().any(|n| n == *k))
            .map(|k| k.as_str())
            .collect();
        return Err(Error::Checkpoint(format!(
            "unknown tensors: {}",
            extras.join(", ")
        )));
    }
    Ok((params, vocab, file.step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_model() -> (ModelParams, Vocabulary) {
        let vocab = Vocabulary::build(["the red circle", "the blue square moving left"]);
        let config = ModelConfig {
            word_dim: 6,
            rnn_hidden: 5,
            feature_dim: 4,
            embed_dim: 8,
            ..Default::default()
        };
        let params = ModelParams::init(config, vocab.len(), &mut ChaCha8Rng::seed_from_u64(7));
        (params, vocab)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (params, vocab) = small_model();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, &vocab, 42, &path).unwrap();
        let (loaded, loaded_vocab, step) = load_checkpoint(&path).unwrap();
        assert_eq!(step, 42);
        assert_eq!(loaded_vocab, vocab);
        assert_eq!(loaded, params);
        let mut identical = true;
        params.for_each_tensor(|name, data| {
            loaded.for_each_tensor(|other_name, other| {
                if name == other_name {
                    identical &= data
                        .iter()
                        .zip(other)
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                }
            });
        });
        assert!(identical, "values must survive to the exact bit");
    }

    #[test]
    fn saving_twice_produces_identical_bytes() {
        let (params, vocab) = small_model();
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&params, &vocab, 1, &a).unwrap();
        save_checkpoint(&params, &vocab, 1, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn vocabulary_and_embedding_table_must_agree() {
        let (params, _) = small_model();
        let wrong = Vocabulary::build(["one extra word here beyond the original vocabulary"]);
        let dir = tempdir().unwrap();
        let err = save_checkpoint(&params, &wrong, 0, &dir.path().join("x.ckpt")).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn future_versions_are_rejected() {
        let (params, vocab) = small_model();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, &vocab, 0, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["version"] = serde_json::json!(2);
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::VersionMismatch { found: 2, .. }
        ));
    }

    #[test]
    fn missing_and_unknown_tensors_are_rejected() {
        let (params, vocab) = small_model();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, &vocab, 0, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let tensors = value["tensors"].as_object_mut().unwrap();
        let moved = tensors.remove("prm.weight").unwrap();
        tensors.insert("prm.weights".into(), moved);
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("prm.weight"), "got: {err}");
    }

    #[test]
    fn resized_tensors_are_rejected() {
        let (params, vocab) = small_model();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, &vocab, 0, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        value["tensors"]["prm.weight"]
            .as_array_mut()
            .unwrap()
            .pop();
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "got: {err}");
    }
}
