//! Loss-less decoding verification: the analytic one-step accept/residual
//! identity evaluated on the model's actual (q, p) distribution pairs,
//! plus a Monte Carlo total-variation comparison of generated tokens.

use crate::decoding::{ar_generate, pass_generate, DecodeConfig};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::{
    accept_prob, adjust, residual_distribution, sample, derive_seed, Distribution, SamplerConfig,
    TaskRng,
};
use crate::TokenId;
use rayon::prelude::*;

/// Analytic identity tolerance: the decomposition must reproduce q
/// coordinate-wise to this bound at every tested context.
pub const ANALYTIC_EPS: f64 = 1e-9;
/// Monte Carlo total-variation bound for the first-token marginal.
pub const TV_LIMIT: f64 = 0.02;

/// Max coordinate deviation of `p(t) a(t) + (sum_a p(a)(1 - a(a))) r(t)`
/// from `q(t)`, where `a` is the acceptance probability and `r` the
/// residual distribution supplied by the caller.
///
/// Taking `r` as a raw slice lets the fault-injection tests feed a
/// deliberately broken residual.
pub fn decomposition_deviation(q: &Distribution, p: &Distribution, residual: &[f64]) -> Result<f64> {
    if q.len() != p.len() || q.len() != residual.len() {
        return Err(Error::Shape("decomposition: length mismatch".into()));
    }
    let mut reject_mass = 0.0f64;
    for t in 0..q.len() {
        let pt = p.probs()[t];
        if pt > 0.0 {
            reject_mass += pt * (1.0 - accept_prob(q.probs()[t], pt)?);
        }
    }
    let mut worst = 0.0f64;
    for t in 0..q.len() {
        let pt = p.probs()[t];
        let accept_part = if pt > 0.0 {
            pt * accept_prob(q.probs()[t], pt)?
        } else {
            0.0
        };
        let total = accept_part + reject_mass * residual[t];
        worst = worst.max((total - q.probs()[t]).abs());
    }
    Ok(worst)
}

/// Deviation using the production residual distribution. A degenerate
/// residual (q == p after adjustment) contributes a zero reject mass,
/// so the identity is checked with a zero residual vector.
pub fn production_deviation(q: &Distribution, p: &Distribution) -> Result<f64> {
    match residual_distribution(q, p) {
        Ok(r) => decomposition_deviation(q, p, r.probs()),
        Err(Error::Degenerate(_)) => decomposition_deviation(q, p, &vec![0.0; q.len()]),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct LosslessnessReport {
    pub contexts: usize,
    pub analytic_max_deviation: f64,
    pub mc_samples: usize,
    pub tv_first_token: f64,
    pub pass: bool,
}

/// Runs the analytic identity over the model's actual (q, p) pairs at
/// random contexts, then the Monte Carlo first-token comparison between
/// the parallel strategy and plain autoregressive sampling.
pub fn verify_losslessness(
    model: &Model,
    vocab_cap: usize,
    contexts: usize,
    mc_samples: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<LosslessnessReport> {
    let vocab = &model.cfg.vocab;
    if vocab.output_size() > vocab_cap {
        return Err(Error::Config(format!(
            "output vocabulary {} exceeds cap {vocab_cap}",
            vocab.output_size()
        )));
    }
    let l = vocab.lookahead_count().min(4).max(1);

    // analytic part: drafting + validation pairs at random contexts
    let deviations: Vec<f64> = (0..contexts)
        .into_par_iter()
        .map(|ctx_idx| -> Result<f64> {
            let mut rng = TaskRng::from_seed(derive_seed(seed, &[1, ctx_idx as u64]));
            let ctx_len = 4 + rng.below(21);
            let mut ctx: Vec<TokenId> = vec![vocab.bos()];
            for _ in 1..ctx_len {
                ctx.push(rng.below(vocab.base_size()) as TokenId);
            }
            let mut cache = model.new_cache();
            let draft_out = model.forward_with_lookahead(&ctx, l, &mut cache)?;
            cache.truncate(draft_out.rollback_len)?;
            let q0 = adjust(draft_out.logits.row(0), sampler)?;
            let x_next = sample(&q0, &mut rng);
            let mut drafts = Vec::with_capacity(l);
            let mut draft_dists = Vec::with_capacity(l);
            for t in 1..=l {
                let p_t = adjust(draft_out.logits.row(t), sampler)?;
                drafts.push(sample(&p_t, &mut rng));
                draft_dists.push(p_t);
            }
            let mut val_tokens = vec![x_next];
            val_tokens.extend_from_slice(&drafts);
            let val_logits = model.forward(&val_tokens, &mut cache)?;
            let mut worst = 0.0f64;
            for t in 1..=l {
                let q_t = adjust(val_logits.row(t - 1), sampler)?;
                worst = worst.max(production_deviation(&q_t, &draft_dists[t - 1])?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let analytic_max_deviation = deviations.into_iter().fold(0.0, f64::max);

    // Monte Carlo part: first-token marginal, parallel vs autoregressive
    let mut prompt_rng = TaskRng::from_seed(derive_seed(seed, &[2]));
    let mut prompt: Vec<TokenId> = vec![vocab.bos()];
    for _ in 1..8 {
        prompt.push(prompt_rng.below(vocab.base_size()) as TokenId);
    }
    let tv_first_token = mc_first_token_tv(model, &prompt, l, mc_samples, sampler, seed)?;

    Ok(LosslessnessReport {
        contexts,
        analytic_max_deviation,
        mc_samples,
        tv_first_token,
        pass: analytic_max_deviation < ANALYTIC_EPS && tv_first_token < TV_LIMIT,
    })
}

/// Total-variation distance between the empirical first-token marginals
/// of seeded parallel-speculative runs and seeded autoregressive runs.
pub fn mc_first_token_tv(
    model: &Model,
    prompt: &[TokenId],
    lookahead: usize,
    samples: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<f64> {
    let v_out = model.cfg.vocab.output_size();
    let count_first = |strategy_salt: u64, use_pass: bool| -> Result<Vec<u64>> {
        let counts = (0..samples)
            .into_par_iter()
            .map(|i| -> Result<TokenId> {
                let cfg = DecodeConfig {
                    lookahead,
                    max_new_tokens: 2,
                    min_target_len: None,
                    sampler: SamplerConfig {
                        rng_seed: derive_seed(seed, &[strategy_salt, i as u64]),
                        ..sampler.clone()
                    },
                    collect_trace: false,
                };
                let gen = if use_pass {
                    pass_generate(model, prompt, &cfg)?
                } else {
                    ar_generate(model, prompt, &cfg)?
                };
                Ok(gen.generated()[0])
            })
            .try_fold(
                || vec![0u64; v_out],
                |mut acc, tok| {
                    acc[tok? as usize] += 1;
                    Ok::<_, Error>(acc)
                },
            )
            .try_reduce(
                || vec![0u64; v_out],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    Ok(a)
                },
            )?;
        Ok(counts)
    };
    let pass_counts = count_first(11, true)?;
    let ar_counts = count_first(12, false)?;
    let n = samples as f64;
    let tv = pass_counts
        .iter()
        .zip(&ar_counts)
        .map(|(&a, &b)| (a as f64 / n - b as f64 / n).abs())
        .sum::<f64>()
        / 2.0;
    Ok(tv)
}
