use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Network hyperparameters. Every parameter shape is a function of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub d_model: usize,
    pub d_embed: usize,
    /// Hidden width of the decoder feed-forward sublayer.
    pub d_ff: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Zero selects the features-only baseline with no semantic branch.
    pub demographic_dim: usize,
    pub n_decoder_blocks: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 1280,
            d_model: 512,
            d_embed: 512,
            d_ff: 512,
            n_heads: 8,
            vocab_size: 2212,
            max_len: 50,
            demographic_dim: 7,
            n_decoder_blocks: 1,
            dropout_rate: 0.1,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by tests and the desk-scale profiles.
    pub fn tiny(vocab_size: usize, feature_dim: usize, demographic_dim: usize) -> Self {
        Self {
            feature_dim,
            d_model: 32,
            d_embed: 32,
            d_ff: 64,
            n_heads: 4,
            vocab_size,
            max_len: 16,
            demographic_dim,
            n_decoder_blocks: 1,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("d_model", self.d_model),
            ("d_embed", self.d_embed),
            ("d_ff", self.d_ff),
            ("n_heads", self.n_heads),
            ("n_decoder_blocks", self.n_decoder_blocks),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config(format!("vocab_size {} is below 5", self.vocab_size)));
        }
        if self.max_len < 3 {
            return Err(Error::Config(format!("max_len {} is below 3", self.max_len)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn is_baseline(&self) -> bool {
        self.demographic_dim == 0
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
