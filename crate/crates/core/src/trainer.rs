//! Teacher-forced training with masked cross-entropy and Adam.

use std::time::Instant;

use radgen_tensor::{clip_global_norm, Adam, AdamConfig, Scalar, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{generate_streams, stack_rows, Forward, ModelConfig, ModelParameters};
use crate::text::{Vocabulary, PAD_ID};
use crate::{Error, Result};

/// A model-ready example: features, selected demographic slots and report
/// ids padded to `max_len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub features: Vec<f32>,
    pub demographics: Vec<f32>,
    pub ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Save every this many epochs when the caller persists checkpoints.
    pub checkpoint_every: Option<usize>,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 3e-4,
            epochs: 50,
            seed: 0,
            checkpoint_every: None,
            patience: Some(10),
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
    pub param_checksum: String,
}

impl EpochRecord {
    /// Equality on every field except wall-clock time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.val_loss.to_bits() == other.val_loss.to_bits()
            && self.param_checksum == other.param_checksum
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch records serialize") + "\n")
            .collect()
    }

    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| a.same_trajectory(b))
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// SHA-256 over every parameter's little-endian bytes in name order.
pub fn parameter_checksum(params: &ModelParameters) -> String {
    let mut h = Sha256::new();
    for (name, t) in params.iter() {
        h.update(name.as_bytes());
        for v in t.values() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Records the teacher-forced loss of `batch` on `f` and returns it with the
/// number of scored tokens.
///
/// Inputs are `ids[..L-1]`, targets `ids[1..]`; pad targets are unscored.
/// With `trim`, columns that are padding for every example are dropped
/// first, which leaves all scored logits unchanged.
pub fn teacher_forcing_loss<T: Scalar>(f: &mut Forward<'_, T>, batch: &[&Example], trim: bool) -> Result<(Var, usize)> {
    let cfg = f.config();
    let full = cfg.max_len;
    for ex in batch {
        if ex.ids.len() != full {
            return Err(Error::Data(format!(
                "example {} has {} ids, expected {full}",
                ex.id,
                ex.ids.len()
            )));
        }
    }
    let len = if trim {
        batch
            .iter()
            .map(|ex| ex.ids.iter().rposition(|&t| t != PAD_ID).map_or(1, |p| p + 1))
            .max()
            .unwrap_or(1)
            .max(2)
    } else {
        full
    };
    let inputs: Vec<Vec<usize>> = batch.iter().map(|ex| ex.ids[..len - 1].to_vec()).collect();
    let targets: Vec<Option<usize>> = batch
        .iter()
        .flat_map(|ex| ex.ids[1..len].iter().map(|&t| (t != PAD_ID).then_some(t)))
        .collect();
    let count = targets.iter().flatten().count();
    let feats: Vec<&[f32]> = batch.iter().map(|ex| ex.features.as_slice()).collect();
    let feats: Tensor<T> = stack_rows(&feats, cfg.feature_dim, "features")?;
    let demo = if cfg.is_baseline() {
        None
    } else {
        let d: Vec<&[f32]> = batch.iter().map(|ex| ex.demographics.as_slice()).collect();
        Some(stack_rows(&d, cfg.demographic_dim, "demographics")?)
    };
    let hybrid = f.encode(feats, demo)?;
    let logits = f.decode(&inputs, hybrid)?;
    let loss = f.tape.cross_entropy(logits, &targets)?;
    Ok((loss, count))
}

/// One forward/backward pass and Adam update. Returns the batch loss.
pub fn train_step(
    cfg: &ModelConfig,
    params: &mut ModelParameters,
    adam: &mut Adam,
    batch: &[&Example],
    train_cfg: &TrainConfig,
    dropout_rng: ChaCha8Rng,
) -> Result<f32> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let (loss, mut grads) = {
        let mut f = Forward::training(cfg, params, dropout_rng);
        let (loss, _) = teacher_forcing_loss(&mut f, batch, true)?;
        let value = f.tape.value(loss).values()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                batch_ids: batch.iter().map(|e| e.id.clone()).collect(),
            });
        }
        f.tape.backward(loss)?;
        (value, f.gradients())
    };
    if let Some(c) = train_cfg.clip_norm {
        clip_global_norm(&mut grads, c);
    }
    adam.step(params, &grads)?;
    Ok(loss)
}

/// Token-weighted mean loss over `examples` with dropout off.
pub fn evaluate_loss(
    cfg: &ModelConfig,
    params: &ModelParameters,
    examples: &[Example],
    batch_size: usize,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Config("cannot evaluate loss on an empty split".into()));
    }
    let (mut total, mut tokens) = (0.0f64, 0usize);
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let mut f = Forward::new(cfg, params);
        let (loss, count) = teacher_forcing_loss(&mut f, &refs, true)?;
        total += f.tape.value(loss).values()[0] as f64 * count as f64;
        tokens += count;
    }
    Ok(total / tokens as f64)
}

/// Decodes every example in chunks of `batch_size` and detokenizes the
/// output. Example `i` samples from stream `i`, so chunking does not change
/// the result.
pub fn generate_reports(
    cfg: &ModelConfig,
    params: &ModelParameters,
    examples: &[Example],
    vocab: &Vocabulary,
    temperature: f64,
    seed: u64,
    batch_size: usize,
) -> Result<Vec<Vec<String>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(examples.len());
    for (c, chunk) in examples.chunks(batch_size).enumerate() {
        let feats: Vec<&[f32]> = chunk.iter().map(|e| e.features.as_slice()).collect();
        let demo: Vec<&[f32]> = chunk.iter().map(|e| e.demographics.as_slice()).collect();
        let first = (c * batch_size) as u64;
        for ids in generate_streams(cfg, params, &feats, &demo, temperature, seed, first)? {
            out.push(vocab.decode(&ids));
        }
    }
    Ok(out)
}

/// Seeded permutation of `0..n` used for epoch `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn dropout_stream(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * epoch as u64 + 1);
    rng.set_word_pos(batch as u128 * (1 << 32));
    rng
}

/// Outcome of [`fit`]: the log and the best-validation parameters.
pub struct FitResult {
    pub log: TrainLog,
    pub best: ModelParameters,
}

/// Trains from `params` and returns the parameters with the lowest
/// validation loss. `on_epoch` sees each record and the current parameters.
pub fn fit_with<F>(
    cfg: &ModelConfig,
    mut params: ModelParameters,
    train: &[Example],
    val: &[Example],
    train_cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<FitResult>
where
    F: FnMut(&EpochRecord, &ModelParameters) -> Result<()>,
{
    train_cfg.validate()?;
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    let mut adam = Adam::new(train_cfg.adam(), &params);
    let mut log = TrainLog::default();
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=train_cfg.epochs {
        let start = Instant::now();
        let order = epoch_order(train.len(), train_cfg.seed, epoch);
        let (mut total, mut tokens) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let count: usize = batch
                .iter()
                .map(|e| e.ids[1..].iter().filter(|&&t| t != PAD_ID).count())
                .sum();
            let rng = dropout_stream(train_cfg.seed, epoch, b);
            let loss = train_step(cfg, &mut params, &mut adam, &batch, train_cfg, rng)?;
            total += loss as f64 * count as f64;
            tokens += count;
        }
        let val_loss = evaluate_loss(cfg, &params, val, train_cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                batch_ids: val.iter().map(|e| e.id.clone()).collect(),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / tokens.max(1) as f64,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
            param_checksum: parameter_checksum(&params),
        };
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        on_epoch(&record, &params)?;
        log.epochs.push(record);
        if train_cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    Ok(FitResult { log, best })
}

pub fn fit(
    cfg: &ModelConfig,
    params: ModelParameters,
    train: &[Example],
    val: &[Example],
    train_cfg: &TrainConfig,
) -> Result<FitResult> {
    fit_with(cfg, params, train, val, train_cfg, |_, _| Ok(()))
}
