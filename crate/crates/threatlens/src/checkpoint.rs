//! Self-contained model checkpoints.
//!
//! A checkpoint is a single file: a four-byte magic, a format version, a
//! JSON manifest (model kind, hyperparameters, the full vocabulary and its
//! hash, and the parameter table), then every parameter's values as
//! little-endian `f64` in manifest order. Save → load round-trips are
//! bit-exact.
//!
//! The embedded vocabulary hash ties a model to the preprocessing it was
//! trained with; the pipeline refuses to combine models whose hashes
//! differ.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{ClassifierConfig, ClassifierModel};
use crate::ner::{NerConfig, NerModel};
use crate::tensor::Param;
use crate::textprep::Vocabulary;

pub const MAGIC: [u8; 4] = *b"TLCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("vocabulary hash mismatch: manifest says {expected}, contents hash to {actual}")]
    VocabHashMismatch { expected: String, actual: String },
    #[error("parameter {name}: {message}")]
    BadParam { name: String, message: String },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ConfigEntry {
    Classifier(ClassifierConfig),
    Ner(NerConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ConfigEntry,
    vocab_words: Vec<String>,
    vocab_chars: String,
    vocab_sha256: String,
    params: Vec<ParamEntry>,
}

/// A model restored from a checkpoint.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum LoadedModel {
    Classifier(ClassifierModel),
    Ner(NerModel),
}

impl LoadedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            LoadedModel::Classifier(_) => "classifier",
            LoadedModel::Ner(_) => "ner",
        }
    }
}

/// Everything a checkpoint carries.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: LoadedModel,
    pub vocab: Vocabulary,
    /// Content hash of the vocabulary, as stored in the manifest.
    pub vocab_hash: String,
    /// Short digest of the whole file, used as a model version string.
    pub digest: String,
}

fn encode(
    config: ConfigEntry,
    named_params: &[(String, Param)],
    vocab: &Vocabulary,
) -> Vec<u8> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config,
        vocab_words: vocab.words().to_vec(),
        vocab_chars: vocab.chars().into_iter().collect(),
        vocab_sha256: vocab.content_hash(),
        params: named_params
            .iter()
            .map(|(name, p)| ParamEntry {
                name: name.clone(),
                shape: p.borrow().shape().to_vec(),
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest).expect("manifest serializes");
    let payload_len: usize = named_params.iter().map(|(_, p)| p.len() * 8).sum();
    let mut out = Vec::with_capacity(4 + 4 + 8 + manifest_bytes.len() + payload_len);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    for (_, p) in named_params {
        for v in p.borrow().values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_classifier(
    path: &Path,
    model: &ClassifierModel,
    vocab: &Vocabulary,
) -> Result<(), CheckpointError> {
    let bytes = encode(
        ConfigEntry::Classifier(model.config.clone()),
        &model.named_params(),
        vocab,
    );
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_ner(path: &Path, model: &NerModel, vocab: &Vocabulary) -> Result<(), CheckpointError> {
    let bytes = encode(
        ConfigEntry::Ner(model.config.clone()),
        &model.named_params(),
        vocab,
    );
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path)?;
    load_bytes(&bytes)
}

/// Decode a checkpoint from raw bytes. Every structural error is reported
/// rather than panicking, so this is safe on untrusted input.
pub fn load_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 16 {
        return Err(CheckpointError::Truncated);
    }
    if bytes[0..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let manifest_len = usize::try_from(manifest_len).map_err(|_| CheckpointError::Truncated)?;
    let manifest_end = 16usize
        .checked_add(manifest_len)
        .ok_or(CheckpointError::Truncated)?;
    if bytes.len() < manifest_end {
        return Err(CheckpointError::Truncated);
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[16..manifest_end])
        .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(manifest.format_version));
    }

    let vocab = Vocabulary::from_entries(
        manifest.vocab_words.iter().cloned(),
        manifest.vocab_chars.chars(),
    );
    let actual = vocab.content_hash();
    if actual != manifest.vocab_sha256 {
        return Err(CheckpointError::VocabHashMismatch {
            expected: manifest.vocab_sha256,
            actual,
        });
    }

    // Build the model skeleton, then overwrite every parameter from the
    // payload. Dimensions recorded in the manifest are trusted as shapes
    // but must agree with what the configuration implies.
    let model = match &manifest.config {
        ConfigEntry::Classifier(cfg) => LoadedModel::Classifier(ClassifierModel::with_dims(
            cfg.clone(),
            vocab.word_count(),
            0,
        )),
        ConfigEntry::Ner(cfg) => LoadedModel::Ner(NerModel::with_dims(
            cfg.clone(),
            vocab.word_count(),
            vocab.char_count(),
            0,
        )),
    };
    let named: Vec<(String, Param)> = match &model {
        LoadedModel::Classifier(m) => m.named_params(),
        LoadedModel::Ner(m) => m.named_params(),
    };
    if named.len() != manifest.params.len() {
        return Err(CheckpointError::Manifest(format!(
            "expected {} parameters, manifest lists {}",
            named.len(),
            manifest.params.len()
        )));
    }

    let mut offset = manifest_end;
    for ((name, param), entry) in named.iter().zip(&manifest.params) {
        if *name != entry.name {
            return Err(CheckpointError::BadParam {
                name: entry.name.clone(),
                message: format!("expected parameter {name} at this position"),
            });
        }
        let expected_shape = param.borrow().shape().to_vec();
        if expected_shape != entry.shape {
            return Err(CheckpointError::BadParam {
                name: entry.name.clone(),
                message: format!(
                    "shape {:?} does not match configuration ({:?})",
                    entry.shape, expected_shape
                ),
            });
        }
        let count = param.len();
        let end = offset
            .checked_add(count * 8)
            .ok_or(CheckpointError::Truncated)?;
        if bytes.len() < end {
            return Err(CheckpointError::Truncated);
        }
        let mut tensor = param.borrow_mut();
        for (k, chunk) in bytes[offset..end].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(CheckpointError::BadParam {
                    name: entry.name.clone(),
                    message: format!("non-finite value at index {k}"),
                });
            }
            tensor.values_mut()[k] = v;
        }
        offset = end;
    }
    if offset != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - offset));
    }

    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hex::encode(&hasher.finalize()[..6]);

    Ok(Checkpoint {
        model,
        vocab,
        vocab_hash: manifest.vocab_sha256,
        digest,
    })
}
