//! Parameter tensors for the toy decoder-only transformer.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::sampling::TaskRng;
use crate::tensor::Tensor2D;
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1_gain: Vec<f32>,
    pub ln1_bias: Vec<f32>,
    pub wq: Tensor2D,
    pub wk: Tensor2D,
    pub wv: Tensor2D,
    pub wo: Tensor2D,
    pub ln2_gain: Vec<f32>,
    pub ln2_bias: Vec<f32>,
    pub w1: Tensor2D,
    pub b1: Vec<f32>,
    pub w2: Tensor2D,
    pub b2: Vec<f32>,
}

/// All model parameters.
///
/// The token embedding table holds `base + 2 + L` rows; the final `L`
/// rows are the look-ahead embedding table and are the only rows that
/// move during look-ahead training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub tok_emb: Tensor2D,
    pub pos_emb: Tensor2D,
    pub layers: Vec<LayerWeights>,
    pub final_ln_gain: Vec<f32>,
    pub final_ln_bias: Vec<f32>,
    pub out_proj: Tensor2D,
}

impl ModelWeights {
    /// Gaussian initialization (std 0.02) for matrices and embeddings,
    /// identity layernorms, zero biases.
    pub fn random_init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = TaskRng::from_seed(seed);
        let d = cfg.d_emb;
        let mut gauss = |rows: usize, cols: usize| -> Tensor2D {
            let data = (0..rows * cols)
                .map(|_| (rng.normal() * 0.02) as f32)
                .collect();
            Tensor2D::new(rows, cols, data).expect("sized by construction")
        };
        let layers = (0..cfg.n_layers)
            .map(|_| LayerWeights {
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                wq: gauss(d, d),
                wk: gauss(d, d),
                wv: gauss(d, d),
                wo: gauss(d, d),
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
                w1: gauss(d, cfg.d_ff),
                b1: vec![0.0; cfg.d_ff],
                w2: gauss(cfg.d_ff, d),
                b2: vec![0.0; d],
            })
            .collect();
        Ok(Self {
            tok_emb: gauss(cfg.vocab.total_size(), d),
            pos_emb: gauss(cfg.max_seq_len, d),
            layers,
            final_ln_gain: vec![1.0; d],
            final_ln_bias: vec![0.0; d],
            out_proj: gauss(d, cfg.vocab.output_size()),
        })
    }

    pub fn validate_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let d = cfg.d_emb;
        let check = |name: &str, t: &Tensor2D, rows: usize, cols: usize| -> Result<()> {
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::Shape(format!(
                    "{name}: expected {rows}x{cols}, got {}x{}",
                    t.rows(),
                    t.cols()
                )));
            }
            Ok(())
        };
        let check_vec = |name: &str, v: &[f32], len: usize| -> Result<()> {
            if v.len() != len {
                return Err(Error::Shape(format!(
                    "{name}: expected length {len}, got {}",
                    v.len()
                )));
            }
            Ok(())
        };
        check("tok_emb", &self.tok_emb, cfg.vocab.total_size(), d)?;
        check("pos_emb", &self.pos_emb, cfg.max_seq_len, d)?;
        if self.layers.len() != cfg.n_layers {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                cfg.n_layers,
                self.layers.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            check_vec(&format!("layers.{i}.ln1.gain"), &l.ln1_gain, d)?;
            check_vec(&format!("layers.{i}.ln1.bias"), &l.ln1_bias, d)?;
            check(&format!("layers.{i}.attn.wq"), &l.wq, d, d)?;
            check(&format!("layers.{i}.attn.wk"), &l.wk, d, d)?;
            check(&format!("layers.{i}.attn.wv"), &l.wv, d, d)?;
            check(&format!("layers.{i}.attn.wo"), &l.wo, d, d)?;
            check_vec(&format!("layers.{i}.ln2.gain"), &l.ln2_gain, d)?;
            check_vec(&format!("layers.{i}.ln2.bias"), &l.ln2_bias, d)?;
            check(&format!("layers.{i}.mlp.w1"), &l.w1, d, cfg.d_ff)?;
            check_vec(&format!("layers.{i}.mlp.b1"), &l.b1, cfg.d_ff)?;
            check(&format!("layers.{i}.mlp.w2"), &l.w2, cfg.d_ff, d)?;
            check_vec(&format!("layers.{i}.mlp.b2"), &l.b2, d)?;
        }
        check_vec("final_ln.gain", &self.final_ln_gain, d)?;
        check_vec("final_ln.bias", &self.final_ln_bias, d)?;
        check("out_proj", &self.out_proj, d, cfg.vocab.output_size())?;
        Ok(())
    }

    /// Canonical (name, rows, cols, data) view of every tensor, in the
    /// fixed order used by the checkpoint format. Vectors appear as
    /// `1 x n` tensors.
    pub fn tensor_entries(&self) -> Vec<(String, usize, usize, &[f32])> {
        let mut out: Vec<(String, usize, usize, &[f32])> = Vec::new();
        out.push(("tok_emb".into(), self.tok_emb.rows(), self.tok_emb.cols(), self.tok_emb.data()));
        out.push(("pos_emb".into(), self.pos_emb.rows(), self.pos_emb.cols(), self.pos_emb.data()));
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.ln1.gain"), 1, l.ln1_gain.len(), &l.ln1_gain));
            out.push((format!("layers.{i}.ln1.bias"), 1, l.ln1_bias.len(), &l.ln1_bias));
            out.push((format!("layers.{i}.attn.wq"), l.wq.rows(), l.wq.cols(), l.wq.data()));
            out.push((format!("layers.{i}.attn.wk"), l.wk.rows(), l.wk.cols(), l.wk.data()));
            out.push((format!("layers.{i}.attn.wv"), l.wv.rows(), l.wv.cols(), l.wv.data()));
            out.push((format!("layers.{i}.attn.wo"), l.wo.rows(), l.wo.cols(), l.wo.data()));
            out.push((format!("layers.{i}.ln2.gain"), 1, l.ln2_gain.len(), &l.ln2_gain));
            out.push((format!("layers.{i}.ln2.bias"), 1, l.ln2_bias.len(), &l.ln2_bias));
            out.push((format!("layers.{i}.mlp.w1"), l.w1.rows(), l.w1.cols(), l.w1.data()));
            out.push((format!("layers.{i}.mlp.b1"), 1, l.b1.len(), &l.b1));
            out.push((format!("layers.{i}.mlp.w2"), l.w2.rows(), l.w2.cols(), l.w2.data()));
            out.push((format!("layers.{i}.mlp.b2"), 1, l.b2.len(), &l.b2));
        }
        out.push(("final_ln.gain".into(), 1, self.final_ln_gain.len(), &self.final_ln_gain));
        out.push(("final_ln.bias".into(), 1, self.final_ln_bias.len(), &self.final_ln_bias));
        out.push(("out_proj".into(), self.out_proj.rows(), self.out_proj.cols(), self.out_proj.data()));
        out
    }

    /// Rebuilds weights from a name -> tensor map, consuming the entries
    /// it recognizes. Missing tensors or wrong shapes are format errors.
    pub fn from_tensor_map(
        cfg: &ModelConfig,
        map: &mut HashMap<String, Tensor2D>,
    ) -> Result<Self> {
        let take_mat = |map: &mut HashMap<String, Tensor2D>, name: &str| -> Result<Tensor2D> {
            map.remove(name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing tensor '{name}'")))
        };
        let take_vec = |map: &mut HashMap<String, Tensor2D>, name: &str| -> Result<Vec<f32>> {
            let t = take_mat(map, name)?;
            if t.rows() != 1 {
                return Err(Error::Format(format!(
                    "tensor '{name}' should be a row vector, got {}x{}",
                    t.rows(),
                    t.cols()
                )));
            }
            Ok(t.data().to_vec())
        };
        let mut layers = Vec::with_capacity(cfg.n_layers);
        let tok_emb = take_mat(map, "tok_emb")?;
        let pos_emb = take_mat(map, "pos_emb")?;
        for i in 0..cfg.n_layers {
            layers.push(LayerWeights {
                ln1_gain: take_vec(map, &format!("layers.{i}.ln1.gain"))?,
                ln1_bias: take_vec(map, &format!("layers.{i}.ln1.bias"))?,
                wq: take_mat(map, &format!("layers.{i}.attn.wq"))?,
                wk: take_mat(map, &format!("layers.{i}.attn.wk"))?,
                wv: take_mat(map, &format!("layers.{i}.attn.wv"))?,
                wo: take_mat(map, &format!("layers.{i}.attn.wo"))?,
                ln2_gain: take_vec(map, &format!("layers.{i}.ln2.gain"))?,
                ln2_bias: take_vec(map, &format!("layers.{i}.ln2.bias"))?,
                w1: take_mat(map, &format!("layers.{i}.mlp.w1"))?,
                b1: take_vec(map, &format!("layers.{i}.mlp.b1"))?,
                w2: take_mat(map, &format!("layers.{i}.mlp.w2"))?,
                b2: take_vec(map, &format!("layers.{i}.mlp.b2"))?,
            });
        }
        let weights = Self {
            tok_emb,
            pos_emb,
            layers,
            final_ln_gain: take_vec(map, "final_ln.gain")?,
            final_ln_bias: take_vec(map, "final_ln.bias")?,
            out_proj: take_mat(map, "out_proj")?,
        };
        weights.validate_shapes(cfg).map_err(|e| match e {
            Error::Shape(msg) => Error::Format(format!("checkpoint tensor shape: {msg}")),
            other => other,
        })?;
        Ok(weights)
    }
}
