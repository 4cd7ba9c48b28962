//! Base-model pretraining and look-ahead embedding finetuning.

mod adamw;
mod base;
mod lookahead;
mod schedule;

pub use adamw::AdamW;
pub use base::{train_base, train_base_from, TrainResult};
pub use lookahead::{
    eval_lookahead_positions, init_lookahead, train_lookahead, LookaheadBatch,
};
pub use schedule::lr_at;

use crate::error::{Error, Result};
use crate::TokenId;

/// Optimizer and schedule settings.
///
/// Defaults mirror the look-ahead recipe (lr 0.01, batch 8, 10k steps
/// with 2k warmup, cosine decay); CI-scale runs shrink the step counts
/// through this config rather than through code changes.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub seq_len: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Held-out evaluation cadence for the CSV log.
    pub log_every: usize,
}

impl TrainConfig {
    /// Look-ahead finetuning defaults.
    pub fn lookahead_default() -> Self {
        Self {
            lr: 0.01,
            batch_size: 8,
            total_steps: 10_000,
            warmup_steps: 2_000,
            seq_len: 128,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            // decay toward zero would fight the UNK initialization
            weight_decay: 0.0,
            seed: 0,
            log_every: 200,
        }
    }

    /// Base pretraining defaults (artifact plumbing).
    pub fn base_default() -> Self {
        Self {
            lr: 3e-4,
            total_steps: 20_000,
            ..Self::lookahead_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter("lr must be > 0".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::InvalidParameter(format!(
                "warmup_steps {} > total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.seq_len < 2 {
            return Err(Error::InvalidParameter("seq_len must be >= 2".into()));
        }
        Ok(())
    }
}

/// Softmax cross-entropy for one logits row in f64. Adds
/// `(softmax - onehot) * scale` into `d_row` and returns the loss in nats.
pub(crate) fn ce_loss_and_grad(
    logits_row: &[f32],
    target: TokenId,
    scale: f64,
    d_row: &mut [f64],
) -> f64 {
    debug_assert!((target as usize) < logits_row.len());
    let m = logits_row
        .iter()
        .fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
    let mut z = 0.0f64;
    for &v in logits_row {
        z += (v as f64 - m).exp();
    }
    let log_z = z.ln();
    for (j, &v) in logits_row.iter().enumerate() {
        let p = (v as f64 - m).exp() / z;
        d_row[j] += p * scale;
    }
    d_row[target as usize] -= scale;
    -(logits_row[target as usize] as f64 - m - log_z)
}
