//! Cache-discipline self-check: the same seeded generation must produce
//! identical tokens with the KV cache enabled and with every call fully
//! recomputed from scratch.

use super::pass::{pass_generate_with, PassOptions};
use super::DecodeConfig;
use crate::error::Result;
use crate::model::Model;
use crate::TokenId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayDivergence {
    /// First sequence index where the two runs disagree.
    pub index: usize,
    pub cached: Option<TokenId>,
    pub uncached: Option<TokenId>,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub identical: bool,
    pub divergence: Option<ReplayDivergence>,
    pub cached_len: usize,
    pub uncached_len: usize,
}

/// Runs the parallel strategy twice with the same seed — once with the
/// KV cache, once with full recomputation — and reports the first
/// divergent position, which would indicate a cache-management defect.
pub fn replay_consistency_check(
    model: &Model,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<ReplayReport> {
    let cached = pass_generate_with(model, prompt, cfg, &PassOptions::default())?;
    let uncached = pass_generate_with(
        model,
        prompt,
        cfg,
        &PassOptions {
            use_kv_cache: false,
            skip_la_rollback: false,
        },
    )?;
    let divergence = first_divergence(&cached.tokens, &uncached.tokens);
    Ok(ReplayReport {
        identical: divergence.is_none(),
        divergence,
        cached_len: cached.tokens.len(),
        uncached_len: uncached.tokens.len(),
    })
}

fn first_divergence(a: &[TokenId], b: &[TokenId]) -> Option<ReplayDivergence> {
    let n = a.len().max(b.len());
    for i in 0..n {
        let x = a.get(i).copied();
        let y = b.get(i).copied();
        if x != y {
            return Some(ReplayDivergence {
                index: i,
                cached: x,
                uncached: y,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};
    use crate::sampling::SamplerConfig;

    fn model() -> Model {
        let cfg = ModelConfig {
            d_emb: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 96,
            vocab: Vocab::new(32, 4).unwrap(),
        };
        Model::random_init(cfg, 12).unwrap()
    }

    fn cfg(seed: u64, max_new: usize) -> DecodeConfig {
        DecodeConfig {
            lookahead: 4,
            max_new_tokens: max_new,
            sampler: SamplerConfig {
                rng_seed: seed,
                ..SamplerConfig::default()
            },
            ..DecodeConfig::default()
        }
    }

    #[test]
    fn cached_matches_uncached_over_many_seeds() {
        let m = model();
        for seed in 0..30 {
            let report = replay_consistency_check(&m, &[1, 2, 3], &cfg(seed, 40)).unwrap();
            assert!(
                report.identical,
                "seed {seed} diverged at {:?}",
                report.divergence
            );
        }
    }

    #[test]
    fn skipping_rollback_is_detected() {
        let m = model();
        let c = cfg(3, 40);
        let broken = pass_generate_with(
            &m,
            &[1, 2, 3],
            &c,
            &PassOptions {
                use_kv_cache: true,
                skip_la_rollback: true,
            },
        )
        .unwrap();
        let reference = pass_generate_with(
            &m,
            &[1, 2, 3],
            &c,
            &PassOptions {
                use_kv_cache: false,
                skip_la_rollback: false,
            },
        )
        .unwrap();
        let div = first_divergence(&broken.tokens, &reference.tokens);
        assert!(
            div.is_some(),
            "fault injection went undetected: rollback must matter"
        );
    }

    #[test]
    fn empty_budget_is_trivially_identical() {
        let m = model();
        let report = replay_consistency_check(&m, &[5, 6], &cfg(0, 0)).unwrap();
        assert!(report.identical);
        assert_eq!(report.cached_len, 2);
    }
}
