//! Transformer hyperparameters.

use super::vocab::Vocab;
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab: Vocab,
}

impl ModelConfig {
    /// Desk-scale default: fits the 32-token-prompt / 512-token-budget
    /// generation protocol with margin for look-ahead positions.
    pub fn toy_default() -> Self {
        Self {
            d_emb: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 512,
            max_seq_len: 576,
            vocab: Vocab::byte_level(8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_emb == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(Error::InvalidParameter(
                "model dimensions must be nonzero".into(),
            ));
        }
        if self.d_emb % self.n_heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "d_emb {} not divisible by n_heads {}",
                self.d_emb, self.n_heads
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::InvalidParameter("max_seq_len must be > 0".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_emb / self.n_heads
    }
}
