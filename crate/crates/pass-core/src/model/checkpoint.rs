//! Checkpoint file format.
//!
//! Layout (all integers little-endian):
//!   magic  "PASSCKPT"
//!   format version        u32
//!   config block:         d_emb, n_layers, n_heads, d_ff, max_seq_len,
//!                         base_size, lookahead_count, tensor_count (u32 each)
//!                         followed by an FNV-1a checksum (u32) of those fields
//!   tensors, repeated:    name length u32, name bytes,
//!                         rows u64, cols u64, row-major f32 payload
//!
//! Round-trips are bit-exact: tensors are written in a fixed canonical
//! order and f32 payloads preserve their exact bit patterns.

use super::config::ModelConfig;
use super::forward::Model;
use super::vocab::Vocab;
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::tensor::Tensor2D;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"PASSCKPT";
const FORMAT_VERSION: u32 = 1;
const MAX_NAME_LEN: u32 = 256;
const MAX_TENSOR_COUNT: u32 = 16_384;

fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let bytes = checkpoint_bytes(model);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let cfg = &model.cfg;
    let entries = model.weights.tensor_entries();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    let fields: [u32; 8] = [
        cfg.d_emb as u32,
        cfg.n_layers as u32,
        cfg.n_heads as u32,
        cfg.d_ff as u32,
        cfg.max_seq_len as u32,
        cfg.vocab.base_size() as u32,
        cfg.vocab.lookahead_count() as u32,
        entries.len() as u32,
    ];
    let mut cfg_bytes = Vec::with_capacity(32);
    for f in fields {
        cfg_bytes.extend_from_slice(&f.to_le_bytes());
    }
    out.extend_from_slice(&cfg_bytes);
    out.extend_from_slice(&fnv1a32(&cfg_bytes).to_le_bytes());

    for (name, rows, cols, data) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for &v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    parse_checkpoint(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl<'a> Cursor<'a> {
    /// Header-region read: truncation here is a format error.
    fn header(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.off + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "file truncated inside {what} (at byte {})",
                self.off
            )));
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    /// Payload read: truncation here surfaces as an I/O error.
    fn payload(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.off + n > self.bytes.len() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("file truncated inside {what} payload"),
            )));
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.header(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("sized")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.header(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("sized")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.off
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut cur = Cursor { bytes, off: 0 };
    let magic = cur.header(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format("bad magic; not a checkpoint file".into()));
    }
    let version = cur.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let cfg_bytes = cur.header(32, "config block")?;
    let stored_crc = cur.u32("config checksum")?;
    if fnv1a32(cfg_bytes) != stored_crc {
        return Err(Error::Format("config block checksum mismatch".into()));
    }
    let field = |i: usize| -> u32 {
        u32::from_le_bytes(cfg_bytes[i * 4..i * 4 + 4].try_into().expect("sized"))
    };
    let vocab = Vocab::new(field(5) as usize, field(6) as usize)
        .map_err(|e| Error::Format(format!("config block: {e}")))?;
    let cfg = ModelConfig {
        d_emb: field(0) as usize,
        n_layers: field(1) as usize,
        n_heads: field(2) as usize,
        d_ff: field(3) as usize,
        max_seq_len: field(4) as usize,
        vocab,
    };
    cfg.validate()
        .map_err(|e| Error::Format(format!("config block: {e}")))?;
    let tensor_count = field(7);
    if tensor_count == 0 || tensor_count > MAX_TENSOR_COUNT {
        return Err(Error::Format(format!(
            "implausible tensor count {tensor_count}"
        )));
    }

    let mut map: HashMap<String, Tensor2D> = HashMap::new();
    for _ in 0..tensor_count {
        let name_len = cur.u32("tensor name length")?;
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(Error::Format(format!(
                "implausible tensor name length {name_len}"
            )));
        }
        let name_bytes = cur.header(name_len as usize, "tensor name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = cur.u64("tensor rows")? as usize;
        let cols = cur.u64("tensor cols")? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format(format!("tensor '{name}' dimensions overflow")))?;
        let byte_len = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("tensor '{name}' payload overflows")))?;
        if count == 0 || byte_len > cur.remaining() {
            return Err(Error::Format(format!(
                "tensor '{name}' declares {rows}x{cols} entries but only {} bytes remain",
                cur.remaining()
            )));
        }
        let payload = cur.payload(byte_len, &name)?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("sized")))
            .collect();
        if map
            .insert(name.clone(), Tensor2D::new(rows, cols, data)?)
            .is_some()
        {
            return Err(Error::Format(format!("duplicate tensor '{name}'")));
        }
    }
    if cur.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last tensor",
            cur.remaining()
        )));
    }

    let weights = ModelWeights::from_tensor_map(&cfg, &mut map)?;
    if let Some(name) = map.keys().next() {
        return Err(Error::Format(format!("unexpected tensor '{name}'")));
    }
    Model::new(cfg, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::TaskRng;

    fn tiny_model() -> Model {
        let cfg = ModelConfig {
            d_emb: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_seq_len: 12,
            vocab: Vocab::new(16, 2).unwrap(),
        };
        Model::random_init(cfg, 42).unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let model = tiny_model();
        let bytes = checkpoint_bytes(&model);
        let reloaded = parse_checkpoint(&bytes).unwrap();
        assert_eq!(checkpoint_bytes(&reloaded), bytes);
        assert_eq!(reloaded.cfg, model.cfg);
        assert_eq!(reloaded.weights, model.weights);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = tiny_model();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(checkpoint_bytes(&loaded), checkpoint_bytes(&model));
    }

    #[test]
    fn empty_file_is_format_error() {
        assert!(matches!(parse_checkpoint(&[]), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = checkpoint_bytes(&tiny_model());
        bytes[0] ^= 0xff;
        assert!(matches!(parse_checkpoint(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let bytes = checkpoint_bytes(&tiny_model());
        let cut = &bytes[..bytes.len() - 10];
        match parse_checkpoint(cut) {
            Err(Error::Io(_)) | Err(Error::Format(_)) => {}
            other => panic!("expected error, got {:?}", other.map(|_| "model")),
        }
    }

    #[test]
    fn header_fuzz_never_panics_and_always_errors() {
        let model = tiny_model();
        let bytes = checkpoint_bytes(&model);
        // header region: magic + version + config block + checksum + first
        // tensor's name/dims header
        let header_end = 8 + 4 + 32 + 4 + 4 + "tok_emb".len() + 16;
        let mut rng = TaskRng::from_seed(1234);
        for trial in 0..200 {
            let mut mutated = bytes.clone();
            let idx = rng.below(header_end);
            let bit = 1u8 << rng.below(8);
            mutated[idx] ^= bit;
            match parse_checkpoint(&mutated) {
                Ok(_) => panic!("trial {trial}: mutation at byte {idx} went undetected"),
                Err(Error::Format(_)) | Err(Error::Io(_)) => {}
                Err(e) => panic!("trial {trial}: unexpected error kind {e}"),
            }
        }
    }
}
