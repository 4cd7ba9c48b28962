//! Per-layer key/value history with truncation (rollback) support.
//!
//! Rollback is implemented as length truncation: entries beyond the new
//! length stay in the buffers and are overwritten on the next append.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct LayerKv {
    k: Vec<f32>,
    v: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct KVCache {
    layers: Vec<LayerKv>,
    d_emb: usize,
    max_len: usize,
    len: usize,
}

impl KVCache {
    pub fn new(n_layers: usize, d_emb: usize, max_len: usize) -> Self {
        let layers = (0..n_layers)
            .map(|_| LayerKv {
                k: vec![0.0; max_len * d_emb],
                v: vec![0.0; max_len * d_emb],
            })
            .collect();
        Self {
            layers,
            d_emb,
            max_len,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.max_len
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Cache behaves as if only the first `n` positions were ever processed.
    pub fn truncate(&mut self, n: usize) -> Result<()> {
        if n > self.len {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate cache of length {} to {n}",
                self.len
            )));
        }
        self.len = n;
        Ok(())
    }

    /// Writes the key/value rows for the position currently being appended.
    pub(crate) fn put(&mut self, layer: usize, k: &[f32], v: &[f32]) {
        debug_assert!(self.len < self.max_len);
        debug_assert_eq!(k.len(), self.d_emb);
        let start = self.len * self.d_emb;
        self.layers[layer].k[start..start + self.d_emb].copy_from_slice(k);
        self.layers[layer].v[start..start + self.d_emb].copy_from_slice(v);
    }

    /// Marks the position written by [`put`] as complete across all layers.
    pub(crate) fn advance(&mut self) {
        debug_assert!(self.len < self.max_len);
        self.len += 1;
    }

    pub(crate) fn key(&self, layer: usize, pos: usize) -> &[f32] {
        debug_assert!(pos <= self.len);
        let start = pos * self.d_emb;
        &self.layers[layer].k[start..start + self.d_emb]
    }

    pub(crate) fn value(&self, layer: usize, pos: usize) -> &[f32] {
        debug_assert!(pos <= self.len);
        let start = pos * self.d_emb;
        &self.layers[layer].v[start..start + self.d_emb]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncate_bounds() {
        let mut c = KVCache::new(2, 4, 8);
        c.put(0, &[1.0; 4], &[2.0; 4]);
        c.put(1, &[1.0; 4], &[2.0; 4]);
        c.advance();
        assert_eq!(c.len(), 1);
        assert!(c.truncate(2).is_err());
        c.truncate(1).unwrap(); // no-op
        assert_eq!(c.len(), 1);
        c.truncate(0).unwrap();
        assert_eq!(c.len(), 0);
    }
}
