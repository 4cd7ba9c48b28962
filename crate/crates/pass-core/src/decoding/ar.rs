//! Autoregressive baseline: one model call per generated token, KV cache
//! carried across calls.

use super::{check_prompt, DecodeConfig, Generation, GenerationStats};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::{adjust, sample, TaskRng};
use crate::TokenId;
use std::time::Instant;

pub fn ar_generate(model: &Model, prompt: &[TokenId], cfg: &DecodeConfig) -> Result<Generation> {
    check_prompt(prompt)?;
    cfg.sampler.validate()?;
    let stop = cfg.stop_len(prompt.len());
    if stop > model.cfg.max_seq_len {
        return Err(Error::Capacity(format!(
            "target length {stop} exceeds model max_seq_len {}",
            model.cfg.max_seq_len
        )));
    }
    let started = Instant::now();
    let mut rng = TaskRng::from_seed(cfg.sampler.rng_seed);
    let mut seq = prompt.to_vec();
    let mut cache = model.new_cache();
    let mut stats = GenerationStats::default();

    while seq.len() < stop {
        let suffix = &seq[cache.len()..];
        let logits = model.forward(suffix, &mut cache)?;
        stats.model_calls += 1;
        let dist = adjust(logits.row(logits.rows() - 1), &cfg.sampler)?;
        seq.push(sample(&dist, &mut rng));
    }

    stats.iterations = stats.model_calls;
    stats.tokens_generated = (seq.len() - prompt.len()) as u64;
    stats.wall_clock = started.elapsed();
    Ok(Generation {
        tokens: seq,
        prompt_len: prompt.len(),
        stats,
        trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};
    use crate::sampling::SamplerConfig;

    fn model() -> Model {
        let cfg = ModelConfig {
            d_emb: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 64,
            vocab: Vocab::new(32, 2).unwrap(),
        };
        Model::random_init(cfg, 1).unwrap()
    }

    fn cfg(max_new: usize, seed: u64) -> DecodeConfig {
        DecodeConfig {
            lookahead: 2,
            max_new_tokens: max_new,
            sampler: SamplerConfig {
                rng_seed: seed,
                ..SamplerConfig::default()
            },
            ..DecodeConfig::default()
        }
    }

    #[test]
    fn zero_budget_means_zero_calls() {
        let m = model();
        let out = ar_generate(&m, &[1, 2, 3], &cfg(0, 5)).unwrap();
        assert_eq!(out.tokens, vec![1, 2, 3]);
        assert_eq!(out.stats.model_calls, 0);
        assert_eq!(out.stats.tokens_generated, 0);
    }

    #[test]
    fn one_call_per_token() {
        let m = model();
        let out = ar_generate(&m, &[1, 2, 3], &cfg(20, 5)).unwrap();
        assert_eq!(out.stats.model_calls, out.stats.tokens_generated);
        assert_eq!(out.stats.tokens_generated, 20);
        assert_eq!(out.generated().len(), 20);
    }

    #[test]
    fn fixed_seed_reproduces_output() {
        let m = model();
        let a = ar_generate(&m, &[4, 5], &cfg(24, 11)).unwrap();
        let b = ar_generate(&m, &[4, 5], &cfg(24, 11)).unwrap();
        assert_eq!(a.tokens, b.tokens);
        let c = ar_generate(&m, &[4, 5], &cfg(24, 12)).unwrap();
        assert_ne!(a.tokens, c.tokens);
    }

    #[test]
    fn empty_prompt_rejected() {
        assert!(ar_generate(&model(), &[], &cfg(4, 0)).is_err());
    }
}
