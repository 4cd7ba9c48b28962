//! Look-ahead embedding finetuning: everything is frozen except the L
//! trailing rows of the token embedding table.
//!
//! Per step, each batch item takes a window `w_0..w_{T-1}`, picks a
//! prefix length P uniformly, feeds `(w_0..w_{P-1}, [LA]_1..[LA]_L)`,
//! and scores the look-ahead outputs against `w_{P+1}..w_{P+L}` — the
//! position right after the prefix (`w_P`) is what the last real token
//! already predicts, so it stays out of the loss, mirroring how the
//! first generated token is not part of the draft at decode time.

use super::{ce_loss_and_grad, lr_at, AdamW, TrainConfig, TrainResult};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sampling::{derive_seed, TaskRng};
use crate::TokenId;
use rayon::prelude::*;
use std::io::Write;

/// One training batch: fixed-length windows plus a per-sequence prefix
/// length. The loss mask selects exactly L output rows per sequence.
#[derive(Debug, Clone)]
pub struct LookaheadBatch {
    pub windows: Vec<Vec<TokenId>>,
    /// Prefix length P per window: the look-ahead block replaces
    /// positions `P..P+L` of the original window.
    pub prefix_len: Vec<usize>,
}

impl LookaheadBatch {
    /// Samples `batch_size` windows and insertion points. Requires
    /// `seq_len >= l + 2` so every window admits a feasible insertion.
    pub fn sample(
        stream: &[TokenId],
        batch_size: usize,
        seq_len: usize,
        l: usize,
        rng: &mut TaskRng,
    ) -> Result<Self> {
        if seq_len < l + 2 {
            return Err(Error::InvalidParameter(format!(
                "seq_len {seq_len} cannot host {l} look-ahead targets plus a prefix"
            )));
        }
        if stream.len() < seq_len {
            return Err(Error::Data(format!(
                "stream of {} tokens is shorter than one {seq_len}-token window",
                stream.len()
            )));
        }
        let mut windows = Vec::with_capacity(batch_size);
        let mut prefix_len = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let s = rng.below(stream.len() - seq_len + 1);
            windows.push(stream[s..s + seq_len].to_vec());
            // P in [1, seq_len - 1 - l]: at least one real prefix token,
            // and targets w_{P+1}..w_{P+l} stay inside the window
            prefix_len.push(1 + rng.below(seq_len - 1 - l));
        }
        Ok(Self {
            windows,
            prefix_len,
        })
    }

    /// Model input for item `i`: the prefix followed by `[LA]_1..[LA]_l`.
    pub fn model_input(&self, i: usize, model: &Model, l: usize) -> Result<Vec<TokenId>> {
        let p = self.prefix_len[i];
        let mut input = self.windows[i][..p].to_vec();
        for k in 1..=l {
            input.push(model.cfg.vocab.lookahead_token(k)?);
        }
        Ok(input)
    }

    /// Loss entries for item `i`: (logits row index, target token),
    /// exactly `l` of them — the look-ahead output positions.
    pub fn loss_entries(&self, i: usize, l: usize) -> Vec<(usize, TokenId)> {
        let p = self.prefix_len[i];
        (1..=l)
            .map(|k| (p + k - 1, self.windows[i][p + k]))
            .collect()
    }
}

/// Copies the UNK embedding into every look-ahead row, bit-exact.
pub fn init_lookahead(model: &mut Model) -> Result<()> {
    let vocab = model.cfg.vocab.clone();
    let unk_row = model.weights.tok_emb.row(vocab.unk() as usize).to_vec();
    for i in 1..=vocab.lookahead_count() {
        let id = vocab.lookahead_token(i)? as usize;
        model.weights.tok_emb.row_mut(id).copy_from_slice(&unk_row);
    }
    Ok(())
}

/// Finetunes the look-ahead embedding table on the corpus train split.
/// All other parameters are bit-identical before and after.
pub fn train_lookahead(
    mut model: Model,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let vocab = model.cfg.vocab.clone();
    let l = vocab.lookahead_count();
    if l == 0 {
        return Err(Error::Config(
            "model has no look-ahead embedding slots".into(),
        ));
    }
    if cfg.seq_len > model.cfg.max_seq_len {
        return Err(Error::InvalidParameter(format!(
            "seq_len {} exceeds model max_seq_len {}",
            cfg.seq_len, model.cfg.max_seq_len
        )));
    }
    init_lookahead(&mut model)?;

    let train_stream = corpus.train_token_stream(&vocab)?;
    let test_stream = corpus.test_token_stream(&vocab)?;
    let d = model.cfg.d_emb;
    let v_out = vocab.output_size();

    let mut opt = AdamW::new(cfg);
    for _ in 0..l {
        opt.register(d);
    }
    let mut rng = TaskRng::from_seed(derive_seed(cfg.seed, &[0x1a]));
    let mut loss_history = Vec::with_capacity(cfg.total_steps);
    if let Some(out) = log.as_deref_mut() {
        let heads: Vec<String> = (1..=l).map(|k| format!("heldout_pos{k}")).collect();
        writeln!(out, "step,lr,train_loss,{}", heads.join(","))?;
    }

    for step in 0..cfg.total_steps {
        let batch = LookaheadBatch::sample(&train_stream, cfg.batch_size, cfg.seq_len, l, &mut rng)?;
        let scale = 1.0 / (cfg.batch_size * l) as f64;
        let per_item: Vec<(f64, Vec<Vec<f64>>)> = (0..cfg.batch_size)
            .into_par_iter()
            .map(|i| {
                let input = batch.model_input(i, &model, l)?;
                let entries = batch.loss_entries(i, l);
                let (logits, record) = model.record_forward(&input)?;
                let mut d_logits = vec![vec![0.0f64; v_out]; input.len()];
                let mut loss = 0.0f64;
                for &(row, target) in &entries {
                    loss += ce_loss_and_grad(logits.row(row), target, scale, &mut d_logits[row]);
                }
                let designated: Vec<usize> = entries.iter().map(|&(row, _)| row).collect();
                let grads = record.backward_to_inputs(&model, &d_logits, &designated)?;
                Ok((loss / l as f64, grads))
            })
            .collect::<Result<_>>()?;

        let mut la_grads = vec![vec![0.0f64; d]; l];
        let mut loss_sum = 0.0f64;
        for (loss, grads) in per_item {
            loss_sum += loss;
            for (k, g) in grads.iter().enumerate() {
                for (a, b) in la_grads[k].iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        let mean_loss = loss_sum / cfg.batch_size as f64;
        loss_history.push(mean_loss);

        let lr = lr_at(step, cfg)?;
        opt.begin_step();
        for k in 0..l {
            let id = vocab.lookahead_token(k + 1)? as usize;
            opt.update(k, lr, model.weights.tok_emb.row_mut(id), &la_grads[k]);
        }

        if let Some(out) = log.as_deref_mut() {
            if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
                let evals = eval_lookahead_positions(
                    &model,
                    &test_stream,
                    8,
                    cfg.seq_len,
                    derive_seed(cfg.seed, &[0xe7a1, step as u64]),
                )
                .map(|v| {
                    v.iter()
                        .map(|x| format!("{x:.6}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .unwrap_or_else(|_| vec![""; l].join(","));
                writeln!(out, "{step},{lr:.8},{mean_loss:.6},{evals}")?;
            } else {
                writeln!(out, "{step},{lr:.8},{mean_loss:.6},{}", vec![""; l].join(","))?;
            }
        }
    }
    Ok(TrainResult {
        model,
        loss_history,
    })
}

/// Mean held-out cross-entropy per look-ahead position (index 1..=L).
pub fn eval_lookahead_positions(
    model: &Model,
    test_stream: &[TokenId],
    n_windows: usize,
    seq_len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let l = model.cfg.vocab.lookahead_count();
    let mut rng = TaskRng::from_seed(seed);
    let batch = LookaheadBatch::sample(test_stream, n_windows, seq_len, l, &mut rng)?;
    let mut totals = vec![0.0f64; l];
    for i in 0..n_windows {
        let input = batch.model_input(i, model, l)?;
        let mut cache = model.new_cache();
        let logits = model.forward(&input, &mut cache)?;
        let mut sink = vec![0.0f64; logits.cols()];
        for (k, &(row, target)) in batch.loss_entries(i, l).iter().enumerate() {
            totals[k] += ce_loss_and_grad(logits.row(row), target, 0.0, &mut sink);
        }
    }
    Ok(totals.into_iter().map(|t| t / n_windows as f64).collect())
}
