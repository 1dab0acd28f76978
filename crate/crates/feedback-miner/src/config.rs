//! Run configuration: a JSON file plus command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use feedback_miner_core::hyperopt::Objective;
use feedback_miner_core::{Preset, SearchSpace, TokenizerConfig, TpeConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub label: String,
    pub train_corpora: Vec<PathBuf>,
    pub test_corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Encoder preset name (`toy`, `english-base`, `italian-base`,
    /// `multilingual-base`).
    pub preset: String,
    /// Pretrained encoder checkpoint; random initialization when absent.
    pub encoder_weights: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub tokenizer: TokenizerConfig,
    pub train: TrainConfig,
    /// Share of the training corpus held out for checkpoint selection.
    pub validation_fraction: f64,
    pub folds: usize,
    pub tpe: TpeConfig,
    pub space: SearchSpace,
    pub n_trials: usize,
    pub objective: Objective,
    /// Which entry of `corpora` train/tune/evaluate use.
    pub language: String,
    pub corpora: BTreeMap<String, CorpusPaths>,
    pub experiment: ExperimentSpec,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Toy.name().into(),
            encoder_weights: None,
            vocab: None,
            tokenizer: TokenizerConfig::default(),
            train: TrainConfig::default(),
            validation_fraction: 0.2,
            folds: 3,
            tpe: TpeConfig::default(),
            space: SearchSpace::default(),
            n_trials: 20,
            objective: Objective::Accuracy,
            language: "en".into(),
            corpora: BTreeMap::new(),
            experiment: ExperimentSpec::default(),
            seed: 0,
            out: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub undersample: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    /// Make relative paths relative to `base` (the config file's directory).
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.encoder_weights.as_mut().map(fix);
        self.vocab.as_mut().map(fix);
        self.out.as_mut().map(fix);
        for c in self.corpora.values_mut() {
            c.train.as_mut().map(fix);
            c.test.as_mut().map(fix);
        }
        self.experiment.train_corpora.iter_mut().for_each(fix);
        self.experiment.test_corpus.as_mut().map(fix);
    }

    /// Apply overrides. The top-level seed, overridden or not, reseeds
    /// every stage.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        self.train.seed = self.seed;
        self.tpe.seed = self.seed;
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(preset) = &o.preset {
            self.preset = preset.clone();
        }
        if let Some(u) = o.undersample {
            self.train.undersample = u;
        }
    }

    pub fn preset(&self) -> Result<Preset, ConfigError> {
        self.preset.parse().map_err(|_| {
            ConfigError::Invalid(format!(
                "unknown preset {:?}; expected one of {}",
                self.preset,
                Preset::ALL.map(|p| p.name()).join(", ")
            ))
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.preset()?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.tokenizer.validate().map_err(|e| invalid(&e))?;
        self.tpe.validate().map_err(|e| invalid(&e))?;
        self.space.validate().map_err(|e| invalid(&e))?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(ConfigError::Invalid(
                "validation_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.folds < 2 {
            return Err(ConfigError::Invalid("folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn corpus(&self, which: &str) -> Result<&Path, ConfigError> {
        let entry = self.corpora.get(&self.language).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "no corpora configured for language {:?}",
                self.language
            ))
        })?;
        let path = match which {
            "train" => entry.train.as_deref(),
            _ => entry.test.as_deref(),
        };
        path.ok_or_else(|| {
            ConfigError::Invalid(format!(
                "no {which} corpus configured for language {:?}",
                self.language
            ))
        })
    }

    pub fn out_dir(&self) -> Result<&Path, ConfigError> {
        self.out.as_deref().ok_or_else(|| {
            ConfigError::Invalid("no output directory (set \"out\" or pass --out)".into())
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Write the resolved config next to a command's outputs.
    pub fn write_resolved(&self, dir: &Path) -> Result<(), ConfigError> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::create_dir_all(dir)
            .and_then(|_| fs::write(&path, self.to_json()))
            .map_err(|source| ConfigError::Io { path, source })
    }
}
