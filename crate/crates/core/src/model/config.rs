use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Width of each head's query/key/value projection.
    pub d_head: usize,
    pub d_ff: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: Vocab::new().len(),
            d_model: 64,
            n_heads: 4,
            d_head: 16,
            d_ff: 128,
            n_enc_layers: 2,
            n_dec_layers: 2,
            max_len: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A very small configuration for tests and examples.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 12,
            n_heads: 2,
            d_head: 4,
            d_ff: 10,
            n_enc_layers: 1,
            n_dec_layers: 1,
            max_len: 64,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::input(format!("model dimension `{name}` must be >= 1")));
        }
        Ok(())
    }

    pub fn attn_width(&self) -> usize {
        self.n_heads * self.d_head
    }
}
