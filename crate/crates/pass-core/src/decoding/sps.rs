//! Classic two-model speculative sampling: a draft model proposes L
//! tokens autoregressively, the target model scores them all in one
//! pass, and the ratio test keeps a prefix. Both models share the
//! vocabulary; each keeps its own KV cache, rolled back to the
//! committed prefix after every iteration.

use super::{check_prompt, DecodeConfig, Generation, GenerationStats, TraceEvent};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::{
    accept_prob, adjust, residual_distribution, sample, Distribution, TaskRng,
};
use crate::TokenId;
use std::time::Instant;

pub fn sps_generate(
    target: &Model,
    draft: &Model,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation> {
    check_prompt(prompt)?;
    cfg.sampler.validate()?;
    if cfg.lookahead == 0 {
        return Err(Error::Config("draft length must be >= 1".into()));
    }
    if target.cfg.vocab.base_size() != draft.cfg.vocab.base_size() {
        return Err(Error::Config(format!(
            "target and draft models must share the vocabulary: base {} vs {}",
            target.cfg.vocab.base_size(),
            draft.cfg.vocab.base_size()
        )));
    }
    let cap = prompt.len() + cfg.max_new_tokens;
    let stop = cfg.stop_len(prompt.len());
    let limit = target.cfg.max_seq_len.min(draft.cfg.max_seq_len);
    if stop + cfg.lookahead > limit {
        return Err(Error::Capacity(format!(
            "target length {stop} plus {} draft positions exceeds max_seq_len {limit}",
            cfg.lookahead
        )));
    }

    let started = Instant::now();
    let mut rng = TaskRng::from_seed(cfg.sampler.rng_seed);
    let mut seq = prompt.to_vec();
    let mut target_cache = target.new_cache();
    let mut draft_cache = draft.new_cache();
    let mut stats = GenerationStats::with_positions(cfg.lookahead);
    let mut trace = cfg.collect_trace.then(Vec::new);

    while seq.len() < stop {
        let len_before = seq.len();
        let remaining_cap = cap - seq.len();
        let l_used = cfg.lookahead.min(remaining_cap.saturating_sub(1)).max(1);

        // draft phase: L sequential draft-model calls
        let mut draft_dists: Vec<Distribution> = Vec::with_capacity(l_used);
        let mut drafts: Vec<TokenId> = Vec::with_capacity(l_used);
        for t in 1..=l_used {
            let suffix: Vec<TokenId> = if t == 1 {
                seq[draft_cache.len()..].to_vec()
            } else {
                vec![drafts[t - 2]]
            };
            let logits = draft.forward(&suffix, &mut draft_cache)?;
            stats.draft_model_calls += 1;
            let p_t = adjust(logits.row(logits.rows() - 1), &cfg.sampler)?;
            drafts.push(sample(&p_t, &mut rng));
            draft_dists.push(p_t);
        }

        // validation phase: one parallel target call
        let mut val_tokens = seq[target_cache.len()..].to_vec();
        val_tokens.extend_from_slice(&drafts);
        let logits = target.forward(&val_tokens, &mut target_cache)?;
        stats.model_calls += 1;
        stats.iterations += 1;
        // q(. | seq) sits l_used rows from the end
        let base_row = logits.rows() - 1 - l_used;

        let mut accepted_count = 0usize;
        let mut accept_flags = Vec::with_capacity(l_used);
        let mut residual_used = false;
        for t in 1..=l_used {
            let q_t = adjust(logits.row(base_row + t - 1), &cfg.sampler)?;
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
            let q_bonus = adjust(logits.row(base_row + l_used), &cfg.sampler)?;
            seq.push(sample(&q_bonus, &mut rng));
        }

        target_cache.truncate((seq.len() - 1).min(target_cache.len()))?;
        draft_cache.truncate((seq.len() - 1).min(draft_cache.len()))?;

        if let Some(events) = trace.as_mut() {
            events.push(TraceEvent {
                iteration: stats.iterations,
                drafted: drafts,
                accept_flags,
                residual_used,
                bonus,
                cache_len: target_cache.len(),
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
