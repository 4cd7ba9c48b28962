//! Recorded forward computation and the manual reverse-mode sweep.
//!
//! The architecture is fixed, so the backward path is written out per
//! layer type instead of going through a general autodiff graph. One
//! sweep produces gradients with respect to the input-embedding rows
//! (all that look-ahead training needs) and, optionally, every
//! parameter tensor (used by base pretraining).

use super::config::{ModelConfig, LAYERNORM_EPS};
use super::forward::Model;
use crate::error::{Error, Result};
use crate::tensor::{gelu_prime, Tensor2D};
use crate::TokenId;

/// Activations captured for one transformer layer at one position.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    pub ln1_hat: Vec<f32>,
    pub ln1_inv_std: f32,
    pub q: Vec<f32>,
    pub k: Vec<f32>,
    pub v: Vec<f32>,
    /// Attention weights per head over positions `0..=pos`.
    pub attn_probs: Vec<Vec<f32>>,
    pub ctx: Vec<f32>,
    pub ln2_hat: Vec<f32>,
    pub ln2_inv_std: f32,
    pub z1: Vec<f32>,
    pub a1: Vec<f32>,
}

/// Activations captured for one position.
#[derive(Debug, Clone)]
pub(crate) struct PositionRecord {
    pub token: TokenId,
    pub pos: usize,
    pub layers: Vec<LayerTrace>,
    pub final_ln_hat: Vec<f32>,
    pub final_inv_std: f32,
    pub h_final: Vec<f32>,
}

/// A recorded forward pass over one sequence.
#[derive(Debug, Default)]
pub struct ForwardRecord {
    pub(crate) positions: Vec<PositionRecord>,
}

impl ForwardRecord {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn token_at(&self, idx: usize) -> TokenId {
        self.positions[idx].token
    }
}

/// Per-parameter gradient buffers, accumulated in f64.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub tok_emb: Vec<f64>,
    pub pos_emb: Vec<f64>,
    pub layers: Vec<LayerGrads>,
    pub final_ln_gain: Vec<f64>,
    pub final_ln_bias: Vec<f64>,
    pub out_proj: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_emb;
        Self {
            tok_emb: vec![0.0; cfg.vocab.total_size() * d],
            pos_emb: vec![0.0; cfg.max_seq_len * d],
            layers: (0..cfg.n_layers)
                .map(|_| LayerGrads {
                    ln1_gain: vec![0.0; d],
                    ln1_bias: vec![0.0; d],
                    wq: vec![0.0; d * d],
                    wk: vec![0.0; d * d],
                    wv: vec![0.0; d * d],
                    wo: vec![0.0; d * d],
                    ln2_gain: vec![0.0; d],
                    ln2_bias: vec![0.0; d],
                    w1: vec![0.0; d * cfg.d_ff],
                    b1: vec![0.0; cfg.d_ff],
                    w2: vec![0.0; cfg.d_ff * d],
                    b2: vec![0.0; d],
                })
                .collect(),
            final_ln_gain: vec![0.0; d],
            final_ln_bias: vec![0.0; d],
            out_proj: vec![0.0; d * cfg.vocab.output_size()],
        }
    }

    /// Elementwise accumulate, used when reducing per-sequence gradients.
    pub fn add_assign(&mut self, other: &ParamGrads) {
        fn acc(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        acc(&mut self.tok_emb, &other.tok_emb);
        acc(&mut self.pos_emb, &other.pos_emb);
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            acc(&mut l.ln1_gain, &o.ln1_gain);
            acc(&mut l.ln1_bias, &o.ln1_bias);
            acc(&mut l.wq, &o.wq);
            acc(&mut l.wk, &o.wk);
            acc(&mut l.wv, &o.wv);
            acc(&mut l.wo, &o.wo);
            acc(&mut l.ln2_gain, &o.ln2_gain);
            acc(&mut l.ln2_bias, &o.ln2_bias);
            acc(&mut l.w1, &o.w1);
            acc(&mut l.b1, &o.b1);
            acc(&mut l.w2, &o.w2);
            acc(&mut l.b2, &o.b2);
        }
        acc(&mut self.final_ln_gain, &other.final_ln_gain);
        acc(&mut self.final_ln_bias, &other.final_ln_bias);
        acc(&mut self.out_proj, &other.out_proj);
    }
}

/// Result of one backward sweep.
pub struct BackwardResult {
    /// Gradient of the loss with respect to the input embedding vector
    /// (token embedding + positional embedding sum) at each position.
    pub d_input: Vec<Vec<f64>>,
    /// Full parameter gradients when requested.
    pub params: Option<ParamGrads>,
}

/// Exact layernorm backward for the normalized form
/// `x_hat = (x - mean) * inv_std`.
fn layernorm_backward(d_hat: &[f64], hat: &[f32], inv_std: f32) -> Vec<f64> {
    let n = d_hat.len() as f64;
    let mean_d: f64 = d_hat.iter().sum::<f64>() / n;
    let mean_dh: f64 = d_hat
        .iter()
        .zip(hat)
        .map(|(&d, &h)| d * h as f64)
        .sum::<f64>()
        / n;
    d_hat
        .iter()
        .zip(hat)
        .map(|(&d, &h)| inv_std as f64 * (d - mean_d - h as f64 * mean_dh))
        .collect()
}

/// `x . w^T` in f64 (`x.len() == w.cols()`).
fn matvec_t_f64(x: &[f64], w: &Tensor2D) -> Vec<f64> {
    (0..w.rows())
        .map(|i| {
            let row = w.row(i);
            x.iter().zip(row).map(|(&xv, &wv)| xv * wv as f64).sum()
        })
        .collect()
}

/// `dw[i][j] += u[i] * g[j]`.
fn outer_acc(dw: &mut [f64], u: &[f32], g: &[f64], cols: usize) {
    for (i, &ui) in u.iter().enumerate() {
        let ui = ui as f64;
        let row = &mut dw[i * cols..(i + 1) * cols];
        for (j, &gj) in g.iter().enumerate() {
            row[j] += ui * gj;
        }
    }
}

impl ForwardRecord {
    /// Reverse-mode sweep from per-position logit gradients.
    ///
    /// `d_logits` must hold one row per recorded position (rows for
    /// positions outside the loss mask are all zero).
    pub fn backward(
        &self,
        model: &Model,
        d_logits: &[Vec<f64>],
        want_params: bool,
    ) -> Result<BackwardResult> {
        if self.positions.is_empty() {
            return Err(Error::State(
                "backward called without a recorded forward".into(),
            ));
        }
        let cfg = &model.cfg;
        let w = &model.weights;
        let n_pos = self.positions.len();
        if d_logits.len() != n_pos {
            return Err(Error::Shape(format!(
                "backward: {} logit-gradient rows for {} recorded positions",
                d_logits.len(),
                n_pos
            )));
        }
        let v_out = cfg.vocab.output_size();
        for row in d_logits {
            if row.len() != v_out {
                return Err(Error::Shape(format!(
                    "backward: logit-gradient row has {} entries, expected {v_out}",
                    row.len()
                )));
            }
        }
        let d = cfg.d_emb;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut grads = want_params.then(|| ParamGrads::zeros(cfg));

        // Output projection and final layernorm, per position.
        let mut d_x: Vec<Vec<f64>> = Vec::with_capacity(n_pos);
        for (p, rec) in self.positions.iter().enumerate() {
            let dl = &d_logits[p];
            let d_h_final = matvec_t_f64(dl, &w.out_proj);
            if let Some(g) = grads.as_mut() {
                outer_acc(&mut g.out_proj, &rec.h_final, dl, v_out);
                for i in 0..d {
                    g.final_ln_gain[i] += d_h_final[i] * rec.final_ln_hat[i] as f64;
                    g.final_ln_bias[i] += d_h_final[i];
                }
            }
            let d_hat: Vec<f64> = d_h_final
                .iter()
                .zip(&w.final_ln_gain)
                .map(|(&g, &gn)| g * gn as f64)
                .collect();
            d_x.push(layernorm_backward(&d_hat, &rec.final_ln_hat, rec.final_inv_std));
        }

        for l in (0..cfg.n_layers).rev() {
            let lw = &w.layers[l];
            // MLP and ln2, position-local.
            let mut d_x_mid: Vec<Vec<f64>> = Vec::with_capacity(n_pos);
            for (p, rec) in self.positions.iter().enumerate() {
                let tr = &rec.layers[l];
                let g_out = &d_x[p];
                let d_a1 = matvec_t_f64(g_out, &lw.w2);
                let d_z1: Vec<f64> = d_a1
                    .iter()
                    .zip(&tr.z1)
                    .map(|(&da, &z)| da * gelu_prime(z as f64))
                    .collect();
                let u2: Vec<f32> = tr
                    .ln2_hat
                    .iter()
                    .zip(lw.ln2_gain.iter().zip(&lw.ln2_bias))
                    .map(|(&h, (&gn, &b))| h * gn + b)
                    .collect();
                if let Some(g) = grads.as_mut() {
                    let lg = &mut g.layers[l];
                    outer_acc(&mut lg.w2, &tr.a1, g_out, d);
                    for (j, &gj) in g_out.iter().enumerate() {
                        lg.b2[j] += gj;
                    }
                    outer_acc(&mut lg.w1, &u2, &d_z1, cfg.d_ff);
                    for (j, &gj) in d_z1.iter().enumerate() {
                        lg.b1[j] += gj;
                    }
                }
                let d_u2 = matvec_t_f64(&d_z1, &lw.w1);
                if let Some(g) = grads.as_mut() {
                    let lg = &mut g.layers[l];
                    for i in 0..d {
                        lg.ln2_gain[i] += d_u2[i] * tr.ln2_hat[i] as f64;
                        lg.ln2_bias[i] += d_u2[i];
                    }
                }
                let d_hat2: Vec<f64> = d_u2
                    .iter()
                    .zip(&lw.ln2_gain)
                    .map(|(&g, &gn)| g * gn as f64)
                    .collect();
                let d_ln = layernorm_backward(&d_hat2, &tr.ln2_hat, tr.ln2_inv_std);
                d_x_mid.push(g_out.iter().zip(&d_ln).map(|(&a, &b)| a + b).collect());
            }

            // Attention: couples positions. Accumulate d_q per position and
            // d_k / d_v contributions from every later query.
            let mut d_q: Vec<Vec<f64>> = vec![vec![0.0; d]; n_pos];
            let mut d_k: Vec<Vec<f64>> = vec![vec![0.0; d]; n_pos];
            let mut d_v: Vec<Vec<f64>> = vec![vec![0.0; d]; n_pos];
            let mut d_ctx_all: Vec<Vec<f64>> = Vec::with_capacity(n_pos);
            for (p, _rec) in self.positions.iter().enumerate() {
                let d_attn_out = &d_x_mid[p];
                let tr = &self.positions[p].layers[l];
                if let Some(g) = grads.as_mut() {
                    outer_acc(&mut g.layers[l].wo, &tr.ctx, d_attn_out, d);
                }
                d_ctx_all.push(matvec_t_f64(d_attn_out, &lw.wo));
            }
            for p in 0..n_pos {
                let tr = &self.positions[p].layers[l];
                let d_ctx = &d_ctx_all[p];
                for h in 0..cfg.n_heads {
                    let r0 = h * hd;
                    let probs = &tr.attn_probs[h];
                    debug_assert_eq!(probs.len(), p + 1);
                    // d_alpha and v-gradient
                    let mut d_alpha = vec![0.0f64; p + 1];
                    for (j, da) in d_alpha.iter_mut().enumerate() {
                        let vj = &self.positions[j].layers[l].v[r0..r0 + hd];
                        let mut acc = 0.0f64;
                        for i in 0..hd {
                            acc += d_ctx[r0 + i] * vj[i] as f64;
                        }
                        *da = acc;
                        let aj = probs[j] as f64;
                        for i in 0..hd {
                            d_v[j][r0 + i] += aj * d_ctx[r0 + i];
                        }
                    }
                    // softmax backward
                    let s: f64 = probs
                        .iter()
                        .zip(&d_alpha)
                        .map(|(&a, &da)| a as f64 * da)
                        .sum();
                    for j in 0..=p {
                        let d_score = probs[j] as f64 * (d_alpha[j] - s);
                        let kj = &self.positions[j].layers[l].k[r0..r0 + hd];
                        let qp = &tr.q[r0..r0 + hd];
                        for i in 0..hd {
                            d_q[p][r0 + i] += d_score * kj[i] as f64 * scale;
                            d_k[j][r0 + i] += d_score * qp[i] as f64 * scale;
                        }
                    }
                }
            }
            // Back through the q/k/v projections and ln1.
            for p in 0..n_pos {
                let tr = &self.positions[p].layers[l];
                let u1: Vec<f32> = tr
                    .ln1_hat
                    .iter()
                    .zip(lw.ln1_gain.iter().zip(&lw.ln1_bias))
                    .map(|(&h, (&gn, &b))| h * gn + b)
                    .collect();
                if let Some(g) = grads.as_mut() {
                    let lg = &mut g.layers[l];
                    outer_acc(&mut lg.wq, &u1, &d_q[p], d);
                    outer_acc(&mut lg.wk, &u1, &d_k[p], d);
                    outer_acc(&mut lg.wv, &u1, &d_v[p], d);
                }
                let mut d_u1 = matvec_t_f64(&d_q[p], &lw.wq);
                for (a, b) in d_u1.iter_mut().zip(matvec_t_f64(&d_k[p], &lw.wk)) {
                    *a += b;
                }
                for (a, b) in d_u1.iter_mut().zip(matvec_t_f64(&d_v[p], &lw.wv)) {
                    *a += b;
                }
                if let Some(g) = grads.as_mut() {
                    let lg = &mut g.layers[l];
                    for i in 0..d {
                        lg.ln1_gain[i] += d_u1[i] * tr.ln1_hat[i] as f64;
                        lg.ln1_bias[i] += d_u1[i];
                    }
                }
                let d_hat1: Vec<f64> = d_u1
                    .iter()
                    .zip(&lw.ln1_gain)
                    .map(|(&g, &gn)| g * gn as f64)
                    .collect();
                let d_ln = layernorm_backward(&d_hat1, &tr.ln1_hat, tr.ln1_inv_std);
                d_x[p] = d_x_mid[p]
                    .iter()
                    .zip(&d_ln)
                    .map(|(&a, &b)| a + b)
                    .collect();
            }
        }

        if let Some(g) = grads.as_mut() {
            for (p, rec) in self.positions.iter().enumerate() {
                let row = rec.token as usize * d;
                for i in 0..d {
                    g.tok_emb[row + i] += d_x[p][i];
                }
                let prow = rec.pos * d;
                for i in 0..d {
                    g.pos_emb[prow + i] += d_x[p][i];
                }
            }
        }

        Ok(BackwardResult {
            d_input: d_x,
            params: grads,
        })
    }

    /// Gradients with respect to the input-embedding rows at the
    /// designated positions only; every other parameter receives none.
    pub fn backward_to_inputs(
        &self,
        model: &Model,
        d_logits: &[Vec<f64>],
        designated: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        for &p in designated {
            if p >= self.positions.len() {
                return Err(Error::InvalidParameter(format!(
                    "designated position {p} outside recorded range {}",
                    self.positions.len()
                )));
            }
        }
        let result = self.backward(model, d_logits, false)?;
        Ok(designated
            .iter()
            .map(|&p| result.d_input[p].clone())
            .collect())
    }
}

// LAYERNORM_EPS is part of the recorded forward contract: the backward
// formulas above assume the same eps the forward used.
const _: () = assert!(LAYERNORM_EPS > 0.0);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};
    use crate::reference::reference_masked_loss;
    use crate::sampling::TaskRng;
    use crate::verify::lookahead_probe;

    fn small_model() -> Model {
        let cfg = ModelConfig {
            d_emb: 32,
            n_layers: 2,
            n_heads: 2,
            d_ff: 64,
            max_seq_len: 48,
            vocab: Vocab::new(64, 4).unwrap(),
        };
        Model::random_init(cfg, 21).unwrap()
    }

    #[test]
    fn backward_without_positions_is_a_state_error() {
        let m = small_model();
        let rec = ForwardRecord::default();
        assert!(matches!(
            rec.backward(&m, &[], false),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_input_gradient() {
        let m = small_model();
        let tokens: Vec<TokenId> = vec![3, 1, 4, 1, 5];
        let (_, rec) = m.record_forward(&tokens).unwrap();
        let d_logits = vec![vec![0.0f64; m.cfg.vocab.output_size()]; tokens.len()];
        let out = rec
            .backward_to_inputs(&m, &d_logits, &[0, 2, 4])
            .unwrap();
        for row in out {
            assert!(row.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn linear_layer_gradient_matches_hand_chain_rule() {
        // loss = sum_j c_j (x . W)_j  =>  d loss / d x = c . W^T
        let w = Tensor2D::new(3, 2, vec![1.0, -2.0, 0.5, 4.0, -1.5, 3.0]).unwrap();
        let c = [2.0f64, -1.0];
        let got = matvec_t_f64(&c, &w);
        assert_eq!(got, vec![
            2.0 * 1.0 + -1.0 * -2.0,
            2.0 * 0.5 + -1.0 * 4.0,
            2.0 * -1.5 + -1.0 * 3.0,
        ]);
    }

    #[test]
    fn layernorm_backward_matches_finite_differences() {
        // independent f64 finite-difference check of the analytic formula
        let x = [0.4f64, -1.1, 2.3, 0.05];
        let eps = LAYERNORM_EPS as f64;
        let normalize = |x: &[f64]| -> Vec<f64> {
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            x.iter().map(|&v| (v - mean) * inv).collect()
        };
        let d_hat = [1.0f64, 0.5, -2.0, 0.25];
        let loss = |x: &[f64]| -> f64 {
            normalize(x).iter().zip(&d_hat).map(|(a, b)| a * b).sum()
        };
        let hat: Vec<f32> = normalize(&x).iter().map(|&v| v as f32).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = (1.0 / (var + eps).sqrt()) as f32;
        let analytic = layernorm_backward(&d_hat, &hat, inv_std);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!(
                (analytic[i] - fd).abs() < 1e-6,
                "coord {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }

    /// Central finite differences through the independent f64 reference
    /// forward agree with the recorded backward sweep on the look-ahead
    /// embedding rows.
    #[test]
    fn lookahead_gradient_matches_finite_differences() {
        let mut model = small_model();
        let l = model.cfg.vocab.lookahead_count();
        let d = model.cfg.d_emb;
        let mut rng = TaskRng::from_seed(77);
        let (input, targets, d_logits) = lookahead_probe(&model, 12, &mut rng).unwrap();
        let (_, rec) = model.record_forward(&input).unwrap();
        let designated: Vec<usize> = (input.len() - l..input.len()).collect();
        let bp = rec
            .backward_to_inputs(&model, &d_logits, &designated)
            .unwrap();

        // two FD passes: the coarse step carries O(h^2) truncation noise
        // covered by its absolute floor, the fine step pins the gradient
        for (h, atol) in [(1e-3f32, 2e-5f64), (1e-4, 1e-7)] {
            for k in 0..l {
                let row_id = model.cfg.vocab.lookahead_token(k + 1).unwrap() as usize;
                for c in 0..d {
                    let orig = model.weights.tok_emb.get(row_id, c);
                    model.weights.tok_emb.set(row_id, c, orig + h);
                    let up = reference_masked_loss(&model, &input, &targets).unwrap();
                    model.weights.tok_emb.set(row_id, c, orig - h);
                    let down = reference_masked_loss(&model, &input, &targets).unwrap();
                    model.weights.tok_emb.set(row_id, c, orig);
                    let h_eff = ((orig + h) as f64) - ((orig - h) as f64);
                    let fd = (up - down) / h_eff;
                    let got = bp[k][c];
                    let tol = 1e-3 * fd.abs().max(got.abs()) + atol;
                    assert!(
                        (got - fd).abs() < tol,
                        "h {h}: row {k} coord {c}: backward {got} vs fd {fd}"
                    );
                }
            }
        }
    }
}
