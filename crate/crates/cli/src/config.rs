//! Run configuration: an optional TOML file, then `--set key=value`
//! overrides, then dedicated flags. The result is resolved once, before any
//! stage runs, and written next to every output.

use std::path::{Path, PathBuf};

use radgen_core::dataset::SynthSpec;
use radgen_core::model::{ModelConfig, DEFAULT_TEMPERATURE};
use radgen_core::text::{CleaningConfig, DEFAULT_MIN_WORDS, DEFAULT_VOCAB_CAP};
use radgen_core::trainer::TrainConfig;
use radgen_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub min_words: usize,
    pub vocab_cap: usize,
    pub ethnicity_count: usize,
    pub age_min: u32,
    pub age_max: u32,
    /// Number of disjoint subsets to sample.
    pub subsets: usize,
    /// Size of each subset; unset means as large as the pool allows.
    pub subset_size: Option<usize>,
    pub stopwords: Option<PathBuf>,
    pub standardization: Option<PathBuf>,
    pub prior_study_patterns: Option<PathBuf>,
    pub noise_patterns: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            min_words: DEFAULT_MIN_WORDS,
            vocab_cap: DEFAULT_VOCAB_CAP,
            ethnicity_count: 5,
            age_min: 19,
            age_max: 91,
            subsets: 1,
            subset_size: None,
            stopwords: None,
            standardization: None,
            prior_study_patterns: None,
            noise_patterns: None,
        }
    }
}

impl DataConfig {
    pub fn cleaning(&self) -> Result<CleaningConfig> {
        let mut cfg = CleaningConfig::from_files(
            self.stopwords.as_deref(),
            self.standardization.as_deref(),
            self.prior_study_patterns.as_deref(),
            self.noise_patterns.as_deref(),
        )?;
        cfg.min_words = self.min_words;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub temperature: f64,
    pub batch_size: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Token embedding table (`token v1 v2 ...` per line). Unset means
    /// seeded random unit vectors over the evaluated tokens.
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
    pub alpha: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            embeddings: None,
            embedding_dim: 64,
            alpha: 0.05,
        }
    }
}

/// Everything a command needs. `seed` drives every seeded step of the
/// command it is given to; `train.seed` is always set from it.
/// `model.vocab_size`, `model.feature_dim` and `model.demographic_dim` are
/// derived from the data at training time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub evaluate: EvaluateConfig,
}

/// Parses an override value as a TOML literal, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `file` (if any) and applies `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let train_seed = table
            .get("train")
            .and_then(|t| t.get("seed"))
            .and_then(toml::Value::as_integer);
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if train_seed.is_some_and(|s| s != cfg.seed as i64) {
            return Err(Error::Config("set the top-level `seed` instead of `train.seed`".into()));
        }
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.data.subsets == 0 || self.data.subset_size == Some(0) {
            return Err(Error::Config(
                "data.subsets and data.subset_size must be positive".into(),
            ));
        }
        if self.data.ethnicity_count == 0 {
            return Err(Error::Config("data.ethnicity_count must be positive".into()));
        }
        if self.data.age_min >= self.data.age_max {
            return Err(Error::Config("data.age_min must be below data.age_max".into()));
        }
        if !(self.generate.temperature >= 0.0 && self.generate.temperature.is_finite()) {
            return Err(Error::Config(
                "generate.temperature must be finite and non-negative".into(),
            ));
        }
        if self.generate.batch_size == 0 || self.evaluate.embedding_dim == 0 {
            return Err(Error::Config(
                "generate.batch_size and evaluate.embedding_dim must be positive".into(),
            ));
        }
        if !(self.evaluate.alpha > 0.0 && self.evaluate.alpha < 1.0) {
            return Err(Error::Config("evaluate.alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }
}
