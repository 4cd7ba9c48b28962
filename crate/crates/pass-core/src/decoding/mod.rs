//! Generation strategies: autoregressive baseline, two-model speculative
//! sampling, and single-model parallel speculative sampling, with full
//! cache bookkeeping and per-iteration statistics.

mod ar;
mod pass;
mod replay;
mod sps;

pub use ar::ar_generate;
pub use pass::{pass_generate, pass_generate_with, PassOptions};
pub use replay::{replay_consistency_check, ReplayDivergence, ReplayReport};
pub use sps::sps_generate;

use crate::error::{Error, Result};
use crate::sampling::SamplerConfig;
use crate::TokenId;
use serde::Serialize;
use std::time::Duration;

/// Decode-time settings shared by every strategy.
#[derive(Debug, Clone)]
pub struct DecodeConfig {
    /// Draft length L (look-ahead tokens for the parallel strategy,
    /// draft-model steps for two-model speculation).
    pub lookahead: usize,
    pub max_new_tokens: usize,
    /// Minimum target sequence length (prompt included). `None` runs to
    /// the full `max_new_tokens` budget.
    pub min_target_len: Option<usize>,
    pub sampler: SamplerConfig,
    pub collect_trace: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            lookahead: 4,
            max_new_tokens: 512,
            min_target_len: None,
            sampler: SamplerConfig::default(),
            collect_trace: false,
        }
    }
}

impl DecodeConfig {
    /// Sequence length at which generation stops: the minimum target
    /// length, never beyond the hard budget cap.
    pub(crate) fn stop_len(&self, prompt_len: usize) -> usize {
        let cap = prompt_len + self.max_new_tokens;
        self.min_target_len.map_or(cap, |t| t.min(cap))
    }
}

/// Model-call counts, per-position acceptance tallies, tokens produced,
/// wall clock.
#[derive(Debug, Clone, Default)]
pub struct GenerationStats {
    /// Target-model forward calls.
    pub model_calls: u64,
    /// Draft-model forward calls (two-model speculation only).
    pub draft_model_calls: u64,
    pub tokens_generated: u64,
    pub iterations: u64,
    /// drafted[t-1]: how often draft position t was examined during
    /// validation (acceptance is prefix-structured, so positions after
    /// the first rejection go unexamined).
    pub drafted: Vec<u64>,
    /// accepted[t-1]: how often draft position t was accepted.
    pub accepted: Vec<u64>,
    pub wall_clock: Duration,
}

impl GenerationStats {
    pub(crate) fn with_positions(l: usize) -> Self {
        Self {
            drafted: vec![0; l],
            accepted: vec![0; l],
            ..Self::default()
        }
    }

    /// Committed tokens per target-model call.
    pub fn tokens_per_call(&self) -> f64 {
        if self.model_calls == 0 {
            return 0.0;
        }
        self.tokens_generated as f64 / self.model_calls as f64
    }

    /// Mean accepted draft positions per iteration.
    pub fn accepted_per_iteration(&self) -> f64 {
        if self.iterations == 0 {
            return 0.0;
        }
        self.accepted.iter().sum::<u64>() as f64 / self.iterations as f64
    }
}

/// One line of the generation trace, emitted per iteration.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub iteration: u64,
    pub drafted: Vec<TokenId>,
    pub accept_flags: Vec<bool>,
    pub residual_used: bool,
    pub bonus: bool,
    pub cache_len: usize,
    /// Tokens committed by this iteration.
    pub committed: usize,
}

/// A finished generation: the full token sequence (prompt included),
/// statistics, and the optional per-iteration trace.
#[derive(Debug, Clone)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    pub prompt_len: usize,
    pub stats: GenerationStats,
    pub trace: Option<Vec<TraceEvent>>,
}

impl Generation {
    /// The newly generated suffix.
    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }
}

pub(crate) fn check_prompt(prompt: &[TokenId]) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::InvalidParameter(
            "prompt must contain at least one token".into(),
        ));
    }
    Ok(())
}
