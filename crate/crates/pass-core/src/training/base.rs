//! Next-token pretraining of the full parameter set (artifact plumbing:
//! the decoding strategies need *some* trained target model).

use super::{ce_loss_and_grad, lr_at, AdamW, TrainConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelWeights, ParamGrads};
use crate::sampling::{derive_seed, TaskRng};
use crate::TokenId;
use rayon::prelude::*;
use std::io::Write;

pub struct TrainResult {
    pub model: Model,
    /// Mean training loss at every step.
    pub loss_history: Vec<f64>,
}

/// Flat gradient views in canonical order. Must stay in lockstep with
/// [`param_slices_mut`].
fn grad_slices(g: &ParamGrads) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = vec![&g.tok_emb, &g.pos_emb];
    for l in &g.layers {
        v.push(&l.ln1_gain);
        v.push(&l.ln1_bias);
        v.push(&l.wq);
        v.push(&l.wk);
        v.push(&l.wv);
        v.push(&l.wo);
        v.push(&l.ln2_gain);
        v.push(&l.ln2_bias);
        v.push(&l.w1);
        v.push(&l.b1);
        v.push(&l.w2);
        v.push(&l.b2);
    }
    v.push(&g.final_ln_gain);
    v.push(&g.final_ln_bias);
    v.push(&g.out_proj);
    v
}

fn param_slices_mut(w: &mut ModelWeights) -> Vec<&mut [f32]> {
    let mut v: Vec<&mut [f32]> = vec![w.tok_emb.data_mut(), w.pos_emb.data_mut()];
    for l in w.layers.iter_mut() {
        v.push(&mut l.ln1_gain);
        v.push(&mut l.ln1_bias);
        v.push(l.wq.data_mut());
        v.push(l.wk.data_mut());
        v.push(l.wv.data_mut());
        v.push(l.wo.data_mut());
        v.push(&mut l.ln2_gain);
        v.push(&mut l.ln2_bias);
        v.push(l.w1.data_mut());
        v.push(&mut l.b1);
        v.push(l.w2.data_mut());
        v.push(&mut l.b2);
    }
    v.push(&mut w.final_ln_gain);
    v.push(&mut w.final_ln_bias);
    v.push(w.out_proj.data_mut());
    v
}

/// Trains a freshly initialized model on the corpus train split.
pub fn train_base(
    corpus: &Corpus,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<TrainResult> {
    let model = Model::random_init(model_cfg.clone(), cfg.seed)?;
    train_base_from(model, corpus, cfg, log)
}

/// Continues next-token training from existing weights.
pub fn train_base_from(
    mut model: Model,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if cfg.seq_len > model.cfg.max_seq_len {
        return Err(Error::InvalidParameter(format!(
            "seq_len {} exceeds model max_seq_len {}",
            cfg.seq_len, model.cfg.max_seq_len
        )));
    }
    let vocab = model.cfg.vocab.clone();
    let train_stream = corpus.train_token_stream(&vocab)?;
    let window = cfg.seq_len + 1;
    if train_stream.len() < window {
        return Err(Error::Data(format!(
            "training split has {} tokens, need at least {window} for one window",
            train_stream.len()
        )));
    }
    let test_stream = corpus.test_token_stream(&vocab)?;

    let mut opt = AdamW::new(cfg);
    {
        let zero = ParamGrads::zeros(&model.cfg);
        for s in grad_slices(&zero) {
            opt.register(s.len());
        }
    }
    let mut rng = TaskRng::from_seed(derive_seed(cfg.seed, &[0xba5e]));
    let mut loss_history = Vec::with_capacity(cfg.total_steps);
    if let Some(out) = log.as_deref_mut() {
        writeln!(out, "step,lr,train_loss,heldout_loss")?;
    }

    let v_out = vocab.output_size();
    for step in 0..cfg.total_steps {
        let starts: Vec<usize> = (0..cfg.batch_size)
            .map(|_| rng.below(train_stream.len() - window + 1))
            .collect();
        let scale = 1.0 / (cfg.batch_size * cfg.seq_len) as f64;
        let per_item: Vec<(f64, ParamGrads)> = starts
            .par_iter()
            .map(|&s| {
                let input = &train_stream[s..s + cfg.seq_len];
                let targets = &train_stream[s + 1..s + window];
                let (logits, record) = model.record_forward(input)?;
                let mut d_logits = vec![vec![0.0f64; v_out]; cfg.seq_len];
                let mut loss = 0.0f64;
                for (p, &t) in targets.iter().enumerate() {
                    loss += ce_loss_and_grad(logits.row(p), t, scale, &mut d_logits[p]);
                }
                let back = record.backward(&model, &d_logits, true)?;
                Ok((
                    loss / cfg.seq_len as f64,
                    back.params.expect("params requested"),
                ))
            })
            .collect::<Result<_>>()?;

        let mut items = per_item.into_iter();
        let (mut loss_sum, mut grads) = items.next().expect("batch_size >= 1");
        for (l, g) in items {
            loss_sum += l;
            grads.add_assign(&g);
        }
        let mean_loss = loss_sum / cfg.batch_size as f64;
        loss_history.push(mean_loss);

        let lr = lr_at(step, cfg)?;
        opt.begin_step();
        let gs = grad_slices(&grads);
        let ps = param_slices_mut(&mut model.weights);
        debug_assert_eq!(gs.len(), ps.len());
        for (slot, (p, g)) in ps.into_iter().zip(gs).enumerate() {
            opt.update(slot, lr, p, g);
        }

        if let Some(out) = log.as_deref_mut() {
            if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
                let heldout = heldout_loss(&model, &test_stream, cfg.seq_len, step as u64)
                    .map(|l| format!("{l:.6}"))
                    .unwrap_or_default();
                writeln!(out, "{step},{lr:.8},{mean_loss:.6},{heldout}")?;
            } else {
                writeln!(out, "{step},{lr:.8},{mean_loss:.6},")?;
            }
        }
    }
    Ok(TrainResult {
        model,
        loss_history,
    })
}

/// Mean next-token loss over a few deterministic held-out windows.
fn heldout_loss(model: &Model, test_stream: &[TokenId], seq_len: usize, salt: u64) -> Option<f64> {
    let window = seq_len + 1;
    if test_stream.len() < window {
        return None;
    }
    let mut rng = TaskRng::from_seed(derive_seed(0xeba1, &[salt]));
    let n = 4usize;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for _ in 0..n {
        let s = rng.below(test_stream.len() - window + 1);
        let input = &test_stream[s..s + seq_len];
        let targets = &test_stream[s + 1..s + window];
        let mut cache = model.new_cache();
        let logits = model.forward(input, &mut cache).ok()?;
        let mut sink = vec![0.0f64; logits.cols()];
        for (p, &t) in targets.iter().enumerate() {
            total += ce_loss_and_grad(logits.row(p), t, 0.0, &mut sink);
            count += 1;
        }
    }
    Some(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::model::Vocab;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_emb: 32,
            n_layers: 2,
            n_heads: 2,
            d_ff: 64,
            max_seq_len: 64,
            vocab: Vocab::byte_level(2),
        }
    }

    fn tiny_corpus() -> Corpus {
        // repetitive, highly learnable byte patterns
        let docs: Vec<Vec<u8>> = (0..8)
            .map(|i| {
                let phrase = match i % 4 {
                    0 => "the cat sat on the mat. ",
                    1 => "a dog ran in the park. ",
                    2 => "the sun set over the sea. ",
                    _ => "a bird flew over the hill. ",
                };
                phrase.repeat(12).into_bytes()
            })
            .collect();
        corpus::from_documents(docs, 0.75, 1).unwrap()
    }

    #[test]
    fn loss_decreases() {
        let cfg = TrainConfig {
            total_steps: 60,
            warmup_steps: 10,
            lr: 3e-3,
            batch_size: 4,
            seq_len: 32,
            seed: 3,
            ..TrainConfig::base_default()
        };
        let result = train_base(&tiny_corpus(), &tiny_cfg(), &cfg, None).unwrap();
        let first = result.loss_history[0];
        let last = result.loss_history.last().copied().unwrap();
        assert!(
            last < first,
            "loss should decrease: first {first}, last {last}"
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = TrainConfig {
            total_steps: 12,
            warmup_steps: 4,
            lr: 1e-3,
            batch_size: 2,
            seq_len: 24,
            seed: 9,
            ..TrainConfig::base_default()
        };
        let a = train_base(&tiny_corpus(), &tiny_cfg(), &cfg, None).unwrap();
        let b = train_base(&tiny_corpus(), &tiny_cfg(), &cfg, None).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model.weights, b.model.weights);
    }

    #[test]
    fn corpus_shorter_than_one_window_is_a_data_error() {
        let docs: Vec<Vec<u8>> = vec![b"ab".to_vec(), b"cd".to_vec()];
        let c = corpus::from_documents(docs, 0.5, 0).unwrap();
        let cfg = TrainConfig {
            total_steps: 1,
            warmup_steps: 0,
            seq_len: 32,
            ..TrainConfig::base_default()
        };
        assert!(matches!(
            train_base(&c, &tiny_cfg(), &cfg, None),
            Err(Error::Data(_))
        ));
    }
}
