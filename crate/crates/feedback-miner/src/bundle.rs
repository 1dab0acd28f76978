//! A trained three-label classifier on disk: one checkpoint per label, the
//! vocabulary, and a manifest tying them together.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use feedback_miner_core::classifier::{BinaryModel, Checkpoint, TextEncoder};
use feedback_miner_core::{Label, PerLabel, TokenizerConfig, TriClassifier};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointError};
use crate::io::{parse_vocab, vocab_to_string};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const FORMAT: &str = "feedback-miner-bundle";

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("{path}: vocabulary checksum mismatch (manifest {expected:08x}, file {found:08x})")]
    VocabChecksum {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("incompatible bundle: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub file: String,
    pub val_accuracy: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub models: BTreeMap<Label, ModelEntry>,
    pub tokenizer: TokenizerConfig,
    pub vocab: String,
    pub vocab_crc32: u32,
    /// Label order used to break ties when fusing.
    pub fusion_order: Vec<Label>,
    pub head_dropout: f64,
    pub precision: String,
}

fn model_file(label: Label) -> String {
    format!("{}.ckpt", label.as_str())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything needed to write a bundle for one model per label.
pub struct BundleModel<'a> {
    pub model: &'a BinaryModel<f32>,
    pub val_accuracy: f64,
    pub step: u64,
    pub metadata: serde_json::Value,
}

impl<'a> BundleModel<'a> {
    pub fn from_checkpoint(ck: &'a Checkpoint<f32>) -> Self {
        BundleModel {
            model: &ck.model,
            val_accuracy: ck.val_accuracy,
            step: ck.step,
            metadata: serde_json::json!({
                "kind": "binary_model",
                "target": ck.target,
                "val_accuracy": ck.val_accuracy,
                "step": ck.step,
                "config_digest": ck.config_digest,
                "train_size": ck.train_size,
                "val_size": ck.val_size,
                "head_dropout": ck.model.head.dropout_p,
                "history": ck.history,
            }),
        }
    }
}

pub fn save_bundle(
    dir: &Path,
    models: PerLabel<BundleModel<'_>>,
    text: &TextEncoder,
) -> Result<BundleManifest, BundleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let vocab_text = vocab_to_string(&text.vocab);
    let vocab_path = dir.join(VOCAB_FILE);
    fs::write(&vocab_path, &vocab_text).map_err(io_err(&vocab_path))?;
    let mut entries = BTreeMap::new();
    for (label, m) in models.iter() {
        let path = dir.join(model_file(label));
        let meta = serde_json::json!({ "label": label, "model": m.metadata });
        checkpoint::save(&path, m.model.config(), m.model.store(), meta).map_err(|source| {
            BundleError::Checkpoint {
                path: path.clone(),
                source,
            }
        })?;
        entries.insert(
            label,
            ModelEntry {
                file: model_file(label),
                val_accuracy: m.val_accuracy,
                step: m.step,
            },
        );
    }
    let manifest = BundleManifest {
        format: FORMAT.into(),
        version: 1,
        models: entries,
        tokenizer: text.config.clone(),
        vocab: VOCAB_FILE.into(),
        vocab_crc32: crc32fast::hash(vocab_text.as_bytes()),
        fusion_order: Label::ALL.to_vec(),
        head_dropout: models[Label::ProblemReport].model.head.dropout_p,
        precision: "f32".into(),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest, BundleError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| BundleError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
    let bad = |message: String| BundleError::Manifest {
        path: path.clone(),
        message,
    };
    if manifest.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.fusion_order != Label::ALL {
        return Err(bad(
            "fusion order must be problem_report, feature_request, irrelevant".into(),
        ));
    }
    for label in Label::ALL {
        if !manifest.models.contains_key(&label) {
            return Err(bad(format!("no model for {label}")));
        }
    }
    Ok(manifest)
}

pub fn load_bundle(dir: &Path) -> Result<(BundleManifest, TriClassifier<f32>), BundleError> {
    let manifest = read_manifest(dir)?;
    let vocab_path = dir.join(&manifest.vocab);
    let vocab_text = fs::read_to_string(&vocab_path).map_err(io_err(&vocab_path))?;
    let found = crc32fast::hash(vocab_text.as_bytes());
    if found != manifest.vocab_crc32 {
        return Err(BundleError::VocabChecksum {
            path: vocab_path,
            expected: manifest.vocab_crc32,
            found,
        });
    }
    let vocab = parse_vocab(&vocab_text).map_err(|e| BundleError::Manifest {
        path: vocab_path.clone(),
        message: e.to_string(),
    })?;
    let text = TextEncoder::new(vocab, manifest.tokenizer.clone());
    let mut models = Vec::with_capacity(3);
    for label in Label::ALL {
        let path = dir.join(&manifest.models[&label].file);
        let (header, store) =
            checkpoint::load(&path).map_err(|source| BundleError::Checkpoint {
                path: path.clone(),
                source,
            })?;
        let model =
            BinaryModel::from_store(&header.config, store, manifest.head_dropout).map_err(|e| {
                BundleError::Checkpoint {
                    path: path.clone(),
                    source: CheckpointError::Encoder(e),
                }
            })?;
        models.push(model);
    }
    let [a, b, c]: [BinaryModel<f32>; 3] = models.try_into().expect("three models");
    let classifier = TriClassifier::new(PerLabel([a, b, c]), text)
        .map_err(|e| BundleError::Incompatible(e.to_string()))?;
    Ok((manifest, classifier))
}

#[cfg(test)]
mod tests {
    use super::*;
    use feedback_miner_core::encoder::init_encoder;
    use feedback_miner_core::tokenizer::{CLS, PAD, SEP, UNK};
    use feedback_miner_core::{CommentClassifier, Preset, Vocabulary};

    fn text() -> TextEncoder {
        let vocab = Vocabulary::from_tokens([PAD, UNK, CLS, SEP, "app", "crash"]).unwrap();
        TextEncoder::new(
            vocab,
            TokenizerConfig {
                max_len: 8,
                ..Default::default()
            },
        )
    }

    #[test]
    fn save_then_load_predicts_identically() {
        let mut cfg = Preset::Toy.config();
        cfg.vocab_size = 7;
        let models: Vec<BinaryModel<f32>> = (0..3)
            .map(|i| BinaryModel::new(init_encoder(&cfg, i).unwrap(), 0.3, i).unwrap())
            .collect();
        let text = text();
        let bm = |m| BundleModel {
            model: m,
            val_accuracy: 0.5,
            step: 1,
            metadata: serde_json::Value::Null,
        };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(
            dir.path(),
            PerLabel([bm(&models[0]), bm(&models[1]), bm(&models[2])]),
            &text,
        )
        .unwrap();
        let (manifest, loaded) = load_bundle(dir.path()).unwrap();
        assert_eq!(manifest.models[&Label::Irrelevant].file, "irrelevant.ckpt");
        let original = TriClassifier::new(
            PerLabel([models[0].clone(), models[1].clone(), models[2].clone()]),
            text,
        )
        .unwrap();
        assert_eq!(
            loaded.predict("crash app").unwrap(),
            original.predict("crash app").unwrap()
        );

        fs::write(dir.path().join(VOCAB_FILE), "[PAD]\n").unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(BundleError::VocabChecksum { .. })
        ));
    }
}
