use serde::{Deserialize, Serialize};

use crate::dialogue::Vocabulary;
use crate::error::{Error, Result};
use crate::unit_codec::{DEFAULT_GROUP_SIZE, DEFAULT_UNIT_VOCAB};

/// Shapes of every learnable tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_group_model: usize,
    pub n_group_layers: usize,
    pub n_group_heads: usize,
    pub group_size: usize,
    pub text_vocab_size: usize,
    pub unit_vocab_size: usize,
    pub unit_embedding_dim: usize,
    pub max_len: usize,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_group_model: 64,
            n_group_layers: 2,
            n_group_heads: 4,
            group_size: DEFAULT_GROUP_SIZE,
            text_vocab_size: Vocabulary::default().size(),
            unit_vocab_size: DEFAULT_UNIT_VOCAB,
            unit_embedding_dim: 32,
            max_len: 1024,
            seed: 0,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// A very small model for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_group_model: 8,
            n_group_layers: 1,
            n_group_heads: 2,
            unit_embedding_dim: 4,
            max_len: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_group_model", self.d_group_model),
            ("n_group_heads", self.n_group_heads),
            ("group_size", self.group_size),
            ("text_vocab_size", self.text_vocab_size),
            ("unit_vocab_size", self.unit_vocab_size),
            ("unit_embedding_dim", self.unit_embedding_dim),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_group_model.is_multiple_of(self.n_group_heads) {
            return Err(Error::Config(format!(
                "d_group_model {} is not divisible by n_group_heads {}",
                self.d_group_model, self.n_group_heads
            )));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }

    /// Width of one concatenated group embedding, `G * d_emb_unit`.
    pub fn adaptor_input_width(&self) -> usize {
        self.group_size * self.unit_embedding_dim
    }

    pub fn mlp_width(&self) -> usize {
        4 * self.d_model
    }

    pub fn group_mlp_width(&self) -> usize {
        4 * self.d_group_model
    }
}
