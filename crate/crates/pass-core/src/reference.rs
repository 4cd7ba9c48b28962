//! Slow f64 reference implementations backing the verification suites.
//!
//! Everything here is recomputed from the raw weight tensors in 64-bit
//! arithmetic, with full-sequence attention and no cache, and shares no
//! code with the production forward/backward path. The finite-difference
//! gradient oracle and the `verify` subcommand run against this module.

use crate::error::{Error, Result};
use crate::model::{Model, LAYERNORM_EPS};
use crate::tensor::Tensor2D;
use crate::TokenId;

fn ln_f64(x: &[f64], gain: &[f32], bias: &[f32]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYERNORM_EPS as f64).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, &v)| (v - mean) * inv * gain[i] as f64 + bias[i] as f64)
        .collect()
}

fn mat_f64(x: &[f64], w: &Tensor2D) -> Vec<f64> {
    let mut out = vec![0.0f64; w.cols()];
    for i in 0..w.rows() {
        let row = w.row(i);
        for (j, o) in out.iter_mut().enumerate() {
            *o += x[i] * row[j] as f64;
        }
    }
    out
}

fn gelu_f64(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

/// Full-precision logits for every position of `tokens`.
pub fn reference_logits(model: &Model, tokens: &[TokenId]) -> Result<Vec<Vec<f64>>> {
    let cfg = &model.cfg;
    let w = &model.weights;
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::Capacity(format!(
            "{} tokens exceed max_seq_len {}",
            tokens.len(),
            cfg.max_seq_len
        )));
    }
    let d = cfg.d_emb;
    let hd = cfg.head_dim();
    let n = tokens.len();

    // embeddings
    let mut h: Vec<Vec<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(p, &t)| {
            if t as usize >= cfg.vocab.total_size() {
                return Err(Error::InvalidParameter(format!("token {t} out of range")));
            }
            Ok(w.tok_emb
                .row(t as usize)
                .iter()
                .zip(w.pos_emb.row(p))
                .map(|(&a, &b)| a as f64 + b as f64)
                .collect())
        })
        .collect::<Result<_>>()?;

    for lw in &w.layers {
        // attention block
        let normed: Vec<Vec<f64>> = h.iter().map(|x| ln_f64(x, &lw.ln1_gain, &lw.ln1_bias)).collect();
        let qs: Vec<Vec<f64>> = normed.iter().map(|u| mat_f64(u, &lw.wq)).collect();
        let ks: Vec<Vec<f64>> = normed.iter().map(|u| mat_f64(u, &lw.wk)).collect();
        let vs: Vec<Vec<f64>> = normed.iter().map(|u| mat_f64(u, &lw.wv)).collect();
        for p in 0..n {
            let mut ctx = vec![0.0f64; d];
            for head in 0..cfg.n_heads {
                let r0 = head * hd;
                let mut scores: Vec<f64> = (0..=p)
                    .map(|j| {
                        (0..hd)
                            .map(|i| qs[p][r0 + i] * ks[j][r0 + i])
                            .sum::<f64>()
                            / (hd as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|&s| (s - m).exp()).sum();
                for s in scores.iter_mut() {
                    *s = (*s - m).exp() / z;
                }
                for (j, &a) in scores.iter().enumerate() {
                    for i in 0..hd {
                        ctx[r0 + i] += a * vs[j][r0 + i];
                    }
                }
            }
            let proj = mat_f64(&ctx, &lw.wo);
            for (hv, pv) in h[p].iter_mut().zip(&proj) {
                *hv += pv;
            }
        }
        // mlp block
        for x in h.iter_mut() {
            let u = ln_f64(x, &lw.ln2_gain, &lw.ln2_bias);
            let mut z = mat_f64(&u, &lw.w1);
            for (zi, &b) in z.iter_mut().zip(&lw.b1) {
                *zi = gelu_f64(*zi + b as f64);
            }
            let mut out = mat_f64(&z, &lw.w2);
            for (oi, &b) in out.iter_mut().zip(&lw.b2) {
                *oi += b as f64;
            }
            for (xi, &oi) in x.iter_mut().zip(&out) {
                *xi += oi;
            }
        }
    }

    Ok(h.iter()
        .map(|x| {
            let hf = ln_f64(x, &w.final_ln_gain, &w.final_ln_bias);
            mat_f64(&hf, &w.out_proj)
        })
        .collect())
}

/// Mean cross-entropy of the logits at `targets` positions against their
/// target token ids, evaluated entirely in f64.
pub fn reference_masked_loss(
    model: &Model,
    tokens: &[TokenId],
    targets: &[(usize, TokenId)],
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter("empty loss mask".into()));
    }
    let logits = reference_logits(model, tokens)?;
    let mut total = 0.0f64;
    for &(pos, target) in targets {
        if pos >= logits.len() {
            return Err(Error::InvalidParameter(format!(
                "loss position {pos} outside sequence of length {}",
                logits.len()
            )));
        }
        let row = &logits[pos];
        if target as usize >= row.len() {
            return Err(Error::InvalidParameter(format!(
                "target {target} outside output vocabulary"
            )));
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        total += -(row[target as usize] - m - z.ln());
    }
    Ok(total / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};

    #[test]
    fn reference_agrees_with_production_forward() {
        let cfg = ModelConfig {
            d_emb: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 32,
            vocab: Vocab::new(24, 2).unwrap(),
        };
        let model = Model::random_init(cfg, 3).unwrap();
        let tokens: Vec<TokenId> = vec![1, 5, 9, 13, 17, 21, 2, 6];
        let mut cache = model.new_cache();
        let fast = model.forward(&tokens, &mut cache).unwrap();
        let slow = reference_logits(&model, &tokens).unwrap();
        for p in 0..tokens.len() {
            for j in 0..fast.cols() {
                let diff = (fast.get(p, j) as f64 - slow[p][j]).abs();
                assert!(diff < 1e-4, "pos {p} logit {j}: {diff}");
            }
        }
    }
}
