//! The toy decoder-only causal transformer and its cached forward pass.
//!
//! Every position's logits are a deterministic function of the tokens at
//! positions `0..=p`: attention sums run in a fixed order with f64
//! accumulators, so cached, uncached, and recorded forwards agree
//! bit-exactly for any split of the input into calls.

use super::cache::KVCache;
use super::config::{ModelConfig, LAYERNORM_EPS};
use super::record::{ForwardRecord, LayerTrace, PositionRecord};
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::tensor::{gelu, layernorm_normalize, matvec_row, Tensor2D};
use crate::TokenId;

pub struct Model {
    pub cfg: ModelConfig,
    pub weights: ModelWeights,
}

/// Output of a drafting forward: the logits row at the last real
/// position plus one row per look-ahead position, and the cache length
/// the caller must roll back to before the next real append.
#[derive(Debug)]
pub struct LookaheadForward {
    pub logits: Tensor2D,
    pub rollback_len: usize,
}

impl Model {
    pub fn new(cfg: ModelConfig, weights: ModelWeights) -> Result<Self> {
        cfg.validate()?;
        weights.validate_shapes(&cfg)?;
        Ok(Self { cfg, weights })
    }

    pub fn random_init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let weights = ModelWeights::random_init(&cfg, seed)?;
        Self::new(cfg, weights)
    }

    pub fn new_cache(&self) -> KVCache {
        KVCache::new(self.cfg.n_layers, self.cfg.d_emb, self.cfg.max_seq_len)
    }

    /// Appends `tokens` after the cached positions and returns one
    /// logits row per appended position (width `base + 2`).
    pub fn forward(&self, tokens: &[TokenId], cache: &mut KVCache) -> Result<Tensor2D> {
        self.forward_internal(tokens, cache, None)
    }

    /// Forward pass over a whole sequence with activation recording,
    /// used by training. Starts from an empty cache.
    pub fn record_forward(&self, tokens: &[TokenId]) -> Result<(Tensor2D, ForwardRecord)> {
        let mut cache = self.new_cache();
        let mut record = ForwardRecord::default();
        let logits = self.forward_internal(tokens, &mut cache, Some(&mut record))?;
        Ok((logits, record))
    }

    /// Drafting forward: appends `suffix` (the committed tokens not yet
    /// cached) followed by `[LA]_1 .. [LA]_l_used`, and returns
    /// `l_used + 1` logits rows — the row at the last suffix position,
    /// then one per look-ahead position.
    ///
    /// The look-ahead cache entries are junk for any future append; the
    /// caller must `cache.truncate(out.rollback_len)` before validation.
    pub fn forward_with_lookahead(
        &self,
        suffix: &[TokenId],
        l_used: usize,
        cache: &mut KVCache,
    ) -> Result<LookaheadForward> {
        let l_max = self.cfg.vocab.lookahead_count();
        if l_used == 0 || l_used > l_max {
            return Err(Error::InvalidParameter(format!(
                "l_used {l_used} out of range 1..={l_max}"
            )));
        }
        if suffix.is_empty() {
            return Err(Error::State(
                "forward_with_lookahead needs at least one uncached real token".into(),
            ));
        }
        if cache.len() + suffix.len() + l_used > self.cfg.max_seq_len {
            return Err(Error::Capacity(format!(
                "sequence of {} + {} look-ahead positions exceeds max_seq_len {}",
                cache.len() + suffix.len(),
                l_used,
                self.cfg.max_seq_len
            )));
        }
        let suffix_logits = self.forward_internal(suffix, cache, None)?;
        let rollback_len = cache.len();
        let la_tokens: Vec<TokenId> = (1..=l_used)
            .map(|i| self.cfg.vocab.lookahead_token(i))
            .collect::<Result<_>>()?;
        let la_logits = self.forward_internal(&la_tokens, cache, None)?;

        let v_out = self.cfg.vocab.output_size();
        let mut rows = Vec::with_capacity((l_used + 1) * v_out);
        rows.extend_from_slice(suffix_logits.row(suffix.len() - 1));
        rows.extend_from_slice(la_logits.data());
        Ok(LookaheadForward {
            logits: Tensor2D::new(l_used + 1, v_out, rows)?,
            rollback_len,
        })
    }

    pub(crate) fn forward_internal(
        &self,
        tokens: &[TokenId],
        cache: &mut KVCache,
        mut record: Option<&mut ForwardRecord>,
    ) -> Result<Tensor2D> {
        if tokens.is_empty() {
            return Err(Error::State("forward over an empty token slice".into()));
        }
        if cache.len() + tokens.len() > self.cfg.max_seq_len {
            return Err(Error::Capacity(format!(
                "cache length {} + {} new tokens exceeds max_seq_len {}",
                cache.len(),
                tokens.len(),
                self.cfg.max_seq_len
            )));
        }
        let cfg = &self.cfg;
        let w = &self.weights;
        let d = cfg.d_emb;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let v_out = cfg.vocab.output_size();
        let total = cfg.vocab.total_size();
        let mut logits = Tensor2D::zeros(tokens.len(), v_out);

        for (idx, &tok) in tokens.iter().enumerate() {
            if tok as usize >= total {
                return Err(Error::InvalidParameter(format!(
                    "token id {tok} outside vocabulary of size {total}"
                )));
            }
            let pos = cache.len();
            let mut h: Vec<f32> = w
                .tok_emb
                .row(tok as usize)
                .iter()
                .zip(w.pos_emb.row(pos))
                .map(|(&t, &p)| t + p)
                .collect();
            let mut layer_traces: Vec<LayerTrace> = Vec::new();

            for (l, lw) in w.layers.iter().enumerate() {
                let (hat1, inv1) = layernorm_normalize(&h, LAYERNORM_EPS);
                let u1: Vec<f32> = hat1
                    .iter()
                    .zip(lw.ln1_gain.iter().zip(&lw.ln1_bias))
                    .map(|(&n, (&g, &b))| n * g + b)
                    .collect();
                let q = matvec_row(&u1, &lw.wq);
                let k = matvec_row(&u1, &lw.wk);
                let v = matvec_row(&u1, &lw.wv);
                cache.put(l, &k, &v);

                let mut ctx = vec![0.0f32; d];
                let mut probs_rec: Vec<Vec<f32>> = Vec::new();
                for head in 0..cfg.n_heads {
                    let r0 = head * hd;
                    let qh = &q[r0..r0 + hd];
                    let mut scores = vec![0.0f64; pos + 1];
                    for (j, s) in scores.iter_mut().enumerate() {
                        let kj = &cache.key(l, j)[r0..r0 + hd];
                        let mut acc = 0.0f64;
                        for (qi, ki) in qh.iter().zip(kj) {
                            acc += *qi as f64 * *ki as f64;
                        }
                        *s = acc * scale;
                    }
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0f64;
                    for s in scores.iter_mut() {
                        *s = (*s - m).exp();
                        sum += *s;
                    }
                    for s in scores.iter_mut() {
                        *s /= sum;
                    }
                    let mut acc = vec![0.0f64; hd];
                    for (j, &a) in scores.iter().enumerate() {
                        let vj = &cache.value(l, j)[r0..r0 + hd];
                        for (i, &vv) in vj.iter().enumerate() {
                            acc[i] += a * vv as f64;
                        }
                    }
                    for (i, &a) in acc.iter().enumerate() {
                        ctx[r0 + i] = a as f32;
                    }
                    if record.is_some() {
                        probs_rec.push(scores.iter().map(|&s| s as f32).collect());
                    }
                }
                let attn_out = matvec_row(&ctx, &lw.wo);
                for (hi, &a) in h.iter_mut().zip(&attn_out) {
                    *hi += a;
                }
                let (hat2, inv2) = layernorm_normalize(&h, LAYERNORM_EPS);
                let u2: Vec<f32> = hat2
                    .iter()
                    .zip(lw.ln2_gain.iter().zip(&lw.ln2_bias))
                    .map(|(&n, (&g, &b))| n * g + b)
                    .collect();
                let mut z1 = matvec_row(&u2, &lw.w1);
                for (z, &b) in z1.iter_mut().zip(&lw.b1) {
                    *z += b;
                }
                let a1: Vec<f32> = z1.iter().map(|&z| gelu(z as f64) as f32).collect();
                let mut mlp = matvec_row(&a1, &lw.w2);
                for (m, &b) in mlp.iter_mut().zip(&lw.b2) {
                    *m += b;
                }
                for (hi, &m) in h.iter_mut().zip(&mlp) {
                    *hi += m;
                }

                if record.is_some() {
                    layer_traces.push(LayerTrace {
                        ln1_hat: hat1,
                        ln1_inv_std: inv1,
                        q,
                        k,
                        v,
                        attn_probs: probs_rec,
                        ctx,
                        ln2_hat: hat2,
                        ln2_inv_std: inv2,
                        z1,
                        a1,
                    });
                }
            }

            let (hatf, invf) = layernorm_normalize(&h, LAYERNORM_EPS);
            let h_final: Vec<f32> = hatf
                .iter()
                .zip(w.final_ln_gain.iter().zip(&w.final_ln_bias))
                .map(|(&n, (&g, &b))| n * g + b)
                .collect();
            let row = matvec_row(&h_final, &w.out_proj);
            logits.row_mut(idx).copy_from_slice(&row);
            cache.advance();

            if let Some(rec) = record.as_deref_mut() {
                rec.positions.push(PositionRecord {
                    token: tok,
                    pos,
                    layers: layer_traces,
                    final_ln_hat: hatf,
                    final_inv_std: invf,
                    h_final,
                });
            }
        }
        Ok(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vocab::Vocab;

    fn small_model() -> Model {
        let cfg = ModelConfig {
            d_emb: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 48,
            vocab: Vocab::new(32, 3).unwrap(),
        };
        Model::random_init(cfg, 7).unwrap()
    }

    fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    }

    #[test]
    fn bos_gives_finite_logits_of_output_width() {
        let m = small_model();
        let mut cache = m.new_cache();
        let logits = m.forward(&[m.cfg.vocab.bos()], &mut cache).unwrap();
        assert_eq!(logits.rows(), 1);
        assert_eq!(logits.cols(), m.cfg.vocab.output_size());
        assert!(logits.is_finite());
    }

    #[test]
    fn cached_matches_uncached_at_every_split() {
        let m = small_model();
        let tokens: Vec<TokenId> = (0..24).map(|i| (i * 7 % 32) as TokenId).collect();
        let mut full_cache = m.new_cache();
        let full = m.forward(&tokens, &mut full_cache).unwrap();
        for split in 1..tokens.len() {
            let mut cache = m.new_cache();
            let first = m.forward(&tokens[..split], &mut cache).unwrap();
            let second = m.forward(&tokens[split..], &mut cache).unwrap();
            for i in 0..split {
                assert_eq!(first.row(i), full.row(i), "split {split} row {i}");
            }
            for i in split..tokens.len() {
                assert_eq!(second.row(i - split), full.row(i), "split {split} row {i}");
            }
        }
    }

    #[test]
    fn causality_future_tokens_do_not_change_past_logits() {
        let m = small_model();
        let a: Vec<TokenId> = vec![1, 2, 3, 4, 5, 6];
        let mut b = a.clone();
        b[4] = 20;
        b[5] = 21;
        let mut ca = m.new_cache();
        let mut cb = m.new_cache();
        let la = m.forward(&a, &mut ca).unwrap();
        let lb = m.forward(&b, &mut cb).unwrap();
        for i in 0..4 {
            assert_eq!(la.row(i), lb.row(i), "position {i} saw the future");
        }
        assert_ne!(la.row(4), lb.row(4));
    }

    #[test]
    fn truncate_then_reforward_matches_fresh() {
        let m = small_model();
        let tokens: Vec<TokenId> = vec![3, 1, 4, 1, 5, 9, 2, 6];
        let mut cache = m.new_cache();
        let fresh = m.forward(&tokens, &mut cache).unwrap();
        // roll all the way back and re-forward
        cache.truncate(0).unwrap();
        let again = m.forward(&tokens, &mut cache).unwrap();
        assert_eq!(fresh.data(), again.data());
        // partial rollback: drop the last 3, re-append different tokens, then
        // compare against a from-scratch forward of the accepted sequence
        cache.truncate(5).unwrap();
        let replacement: Vec<TokenId> = vec![7, 8, 9];
        let redo = m.forward(&replacement, &mut cache).unwrap();
        let mut reference_cache = m.new_cache();
        let mut combined = tokens[..5].to_vec();
        combined.extend_from_slice(&replacement);
        let reference = m.forward(&combined, &mut reference_cache).unwrap();
        for i in 0..3 {
            assert!(
                max_abs_diff(redo.row(i), reference.row(5 + i)) < 1e-5,
                "row {i} diverges after rollback"
            );
        }
    }

    #[test]
    fn lookahead_first_row_matches_plain_forward() {
        let m = small_model();
        let prompt: Vec<TokenId> = vec![5, 6, 7, 8];
        let mut c1 = m.new_cache();
        let plain = m.forward(&prompt, &mut c1).unwrap();
        let mut c2 = m.new_cache();
        let out = m.forward_with_lookahead(&prompt, 1, &mut c2).unwrap();
        assert_eq!(out.logits.rows(), 2);
        assert_eq!(out.logits.row(0), plain.row(3));
        assert_eq!(out.rollback_len, 4);
        assert_eq!(c2.len(), 5);
        c2.truncate(out.rollback_len).unwrap();
        assert_eq!(c2.len(), 4);
    }

    #[test]
    fn lookahead_rows_match_literal_la_tokens() {
        let m = small_model();
        let v = &m.cfg.vocab;
        let prompt: Vec<TokenId> = vec![1, 2, 3];
        let mut c1 = m.new_cache();
        let out = m.forward_with_lookahead(&prompt, 3, &mut c1).unwrap();
        let mut seq = prompt.clone();
        seq.push(v.lookahead_token(1).unwrap());
        seq.push(v.lookahead_token(2).unwrap());
        seq.push(v.lookahead_token(3).unwrap());
        let mut c2 = m.new_cache();
        let literal = m.forward(&seq, &mut c2).unwrap();
        for t in 0..=3 {
            assert_eq!(out.logits.row(t), literal.row(2 + t), "row {t}");
        }
    }

    #[test]
    fn lookahead_near_capacity_is_capacity_error() {
        let m = small_model();
        let prompt: Vec<TokenId> = (0..46).map(|i| (i % 32) as TokenId).collect();
        let mut cache = m.new_cache();
        let err = m.forward_with_lookahead(&prompt, 3, &mut cache).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn lookahead_rejects_bad_l() {
        let m = small_model();
        let mut cache = m.new_cache();
        assert!(m.forward_with_lookahead(&[1], 0, &mut cache).is_err());
        assert!(m.forward_with_lookahead(&[1], 4, &mut cache).is_err());
    }

    #[test]
    fn forward_rejects_unknown_token_and_overflow() {
        let m = small_model();
        let mut cache = m.new_cache();
        let total = m.cfg.vocab.total_size() as TokenId;
        assert!(matches!(
            m.forward(&[total], &mut cache),
            Err(Error::InvalidParameter(_))
        ));
        let long: Vec<TokenId> = vec![0; 49];
        assert!(matches!(
            m.forward(&long, &mut cache),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn recorded_forward_logits_match_inference_path() {
        let m = small_model();
        let tokens: Vec<TokenId> = vec![9, 8, 7, 6, 5, 4];
        let (rec_logits, record) = m.record_forward(&tokens).unwrap();
        let mut cache = m.new_cache();
        let plain = m.forward(&tokens, &mut cache).unwrap();
        assert_eq!(rec_logits.data(), plain.data());
        assert_eq!(record.len(), tokens.len());
    }
}
