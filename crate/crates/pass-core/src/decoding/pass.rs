//! Single-model parallel speculative sampling.
//!
//! Each iteration makes exactly two model calls. The drafting call runs
//! the look-ahead forward: its first row samples the next token, which
//! is committed no matter what happens to the draft, and the remaining
//! rows sample the L draft tokens in parallel. After rolling the
//! look-ahead cache entries back, the validation call scores
//! `[x_next, drafts...]` in one pass and accepts a prefix of the draft
//! by the usual ratio test, sampling from the residual on the first
//! rejection or a bonus token when everything is accepted. Every
//! iteration therefore commits between 2 and L+2 tokens.

use super::{check_prompt, DecodeConfig, Generation, GenerationStats, TraceEvent};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::{
    accept_prob, adjust, residual_distribution, sample, Distribution, TaskRng,
};
use crate::tensor::Tensor2D;
use crate::TokenId;
use std::time::Instant;

/// Cache handling switches. `use_kv_cache: false` recomputes the full
/// prefix on every call (the replay-check reference mode), and
/// `skip_la_rollback` is a fault-injection hook for the cache suites.
#[derive(Debug, Clone)]
pub struct PassOptions {
    pub use_kv_cache: bool,
    pub skip_la_rollback: bool,
}

impl Default for PassOptions {
    fn default() -> Self {
        Self {
            use_kv_cache: true,
            skip_la_rollback: false,
        }
    }
}

pub fn pass_generate(model: &Model, prompt: &[TokenId], cfg: &DecodeConfig) -> Result<Generation> {
    pass_generate_with(model, prompt, cfg, &PassOptions::default())
}

pub fn pass_generate_with(
    model: &Model,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
    opts: &PassOptions,
) -> Result<Generation> {
    check_prompt(prompt)?;
    cfg.sampler.validate()?;
    let table = model.cfg.vocab.lookahead_count();
    if table == 0 {
        return Err(Error::Config(
            "model has no look-ahead embedding table".into(),
        ));
    }
    if cfg.lookahead == 0 || cfg.lookahead > table {
        return Err(Error::Config(format!(
            "lookahead {} outside the model's trained table of {table} entries",
            cfg.lookahead
        )));
    }
    let cap = prompt.len() + cfg.max_new_tokens;
    let stop = cfg.stop_len(prompt.len());
    if stop + cfg.lookahead > model.cfg.max_seq_len {
        return Err(Error::Capacity(format!(
            "target length {stop} plus {} look-ahead positions exceeds max_seq_len {}",
            cfg.lookahead, model.cfg.max_seq_len
        )));
    }

    let started = Instant::now();
    let mut rng = TaskRng::from_seed(cfg.sampler.rng_seed);
    let mut seq = prompt.to_vec();
    let mut cache = model.new_cache();
    let mut stats = GenerationStats::with_positions(cfg.lookahead);
    let mut trace = cfg.collect_trace.then(Vec::new);

    while seq.len() < stop {
        let len_before = seq.len();
        let remaining_cap = cap - seq.len();
        let l_used = cfg.lookahead.min(remaining_cap.saturating_sub(1)).max(1);

        // drafting call
        let draft_logits = if opts.use_kv_cache {
            let suffix = seq[cache.len()..].to_vec();
            let out = model.forward_with_lookahead(&suffix, l_used, &mut cache)?;
            if !opts.skip_la_rollback {
                cache.truncate(out.rollback_len)?;
            }
            out.logits
        } else {
            let mut fresh = model.new_cache();
            model.forward_with_lookahead(&seq, l_used, &mut fresh)?.logits
        };
        stats.model_calls += 1;

        let q0 = adjust(draft_logits.row(0), &cfg.sampler)?;
        let x_next = sample(&q0, &mut rng);
        let mut draft_dists: Vec<Distribution> = Vec::with_capacity(l_used);
        let mut drafts: Vec<TokenId> = Vec::with_capacity(l_used);
        for t in 1..=l_used {
            let p_t = adjust(draft_logits.row(t), &cfg.sampler)?;
            drafts.push(sample(&p_t, &mut rng));
            draft_dists.push(p_t);
        }
        // the first generated token is not part of the draft: commit it now
        seq.push(x_next);

        // validation call over [x_next, drafts...]
        let mut val_tokens = Vec::with_capacity(1 + l_used);
        val_tokens.push(x_next);
        val_tokens.extend_from_slice(&drafts);
        let val_logits = if opts.use_kv_cache {
            model.forward(&val_tokens, &mut cache)?
        } else {
            let mut fresh = model.new_cache();
            let mut full = seq.clone();
            full.extend_from_slice(&drafts);
            let all = model.forward(&full, &mut fresh)?;
            tail_rows(&all, l_used + 1)?
        };
        stats.model_calls += 1;
        stats.iterations += 1;

        let mut accepted_count = 0usize;
        let mut accept_flags = Vec::with_capacity(l_used);
        let mut residual_used = false;
        for t in 1..=l_used {
            let q_t = adjust(val_logits.row(t - 1), &cfg.sampler)?;
            let p_t = &draft_dists[t - 1];
            let x_t = drafts[t - 1];
            stats.drafted[t - 1] += 1;
            let a = accept_prob(q_t.prob(x_t), p_t.prob(x_t))?;
            if rng.uniform() < a {
                seq.push(x_t);
                accepted_count += 1;
                stats.accepted[t - 1] += 1;
                accept_flags.push(true);
            } else {
                accept_flags.push(false);
                // residual sampling; on numerical degeneracy (q == p after
                // adjustment) acceptance was certain anyway, so fall back to q
                let tok = match residual_distribution(&q_t, p_t) {
                    Ok(residual) => sample(&residual, &mut rng),
                    Err(Error::Degenerate(_)) => sample(&q_t, &mut rng),
                    Err(e) => return Err(e),
                };
                seq.push(tok);
                residual_used = true;
                break;
            }
        }
        let bonus = accepted_count == l_used;
        if bonus {
            let q_bonus = adjust(val_logits.row(l_used), &cfg.sampler)?;
            seq.push(sample(&q_bonus, &mut rng));
        }

        if opts.use_kv_cache {
            // roll back to the committed prefix; the last committed token
            // (residual or bonus) is never cached yet
            cache.truncate((seq.len() - 1).min(cache.len()))?;
        }

        if let Some(events) = trace.as_mut() {
            events.push(TraceEvent {
                iteration: stats.iterations,
                drafted: drafts,
                accept_flags,
                residual_used,
                bonus,
                cache_len: if opts.use_kv_cache { cache.len() } else { 0 },
                committed: seq.len() - len_before,
            });
        }
    }

    if seq.len() > cap {
        seq.truncate(cap);
    }
    stats.tokens_generated = (seq.len() - prompt.len()) as u64;
    stats.wall_clock = started.elapsed();
    Ok(Generation {
        tokens: seq,
        prompt_len: prompt.len(),
        stats,
        trace,
    })
}

/// Copies the last `n` rows of a logits matrix.
fn tail_rows(all: &Tensor2D, n: usize) -> Result<Tensor2D> {
    let start = all.rows() - n;
    let mut data = Vec::with_capacity(n * all.cols());
    for r in start..all.rows() {
        data.extend_from_slice(all.row(r));
    }
    Tensor2D::new(n, all.cols(), data)
}
