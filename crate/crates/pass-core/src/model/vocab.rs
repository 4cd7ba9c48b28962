//! Byte-level vocabulary: base tokens, the BOS/UNK specials, and the
//! trailing block of look-ahead token ids.

use crate::error::{Error, Result};
use crate::TokenId;

/// Default byte-level base vocabulary size.
pub const BYTE_BASE_SIZE: usize = 256;

/// Token id layout: `[0, base)` are content tokens, then BOS and UNK,
/// then the `L` look-ahead ids `[LA]_1 .. [LA]_L` in the final slots.
///
/// Model logits span only `base + 2` entries: look-ahead tokens are
/// legal inputs but can never be emitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    base_size: usize,
    lookahead_count: usize,
}

impl Vocab {
    pub fn new(base_size: usize, lookahead_count: usize) -> Result<Self> {
        if base_size == 0 {
            return Err(Error::InvalidParameter("vocab base_size must be > 0".into()));
        }
        Ok(Self {
            base_size,
            lookahead_count,
        })
    }

    /// Standard byte-level vocabulary (256 base tokens).
    pub fn byte_level(lookahead_count: usize) -> Self {
        Self {
            base_size: BYTE_BASE_SIZE,
            lookahead_count,
        }
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn lookahead_count(&self) -> usize {
        self.lookahead_count
    }

    /// Width of the model's output head (base tokens plus BOS and UNK).
    pub fn output_size(&self) -> usize {
        self.base_size + 2
    }

    /// Number of distinct input token ids.
    pub fn total_size(&self) -> usize {
        self.base_size + 2 + self.lookahead_count
    }

    pub fn bos(&self) -> TokenId {
        self.base_size as TokenId
    }

    pub fn unk(&self) -> TokenId {
        (self.base_size + 1) as TokenId
    }

    /// Id of `[LA]_i` for `i` in `1..=lookahead_count`.
    pub fn lookahead_token(&self, i: usize) -> Result<TokenId> {
        if i == 0 || i > self.lookahead_count {
            return Err(Error::InvalidParameter(format!(
                "look-ahead index {i} out of range 1..={}",
                self.lookahead_count
            )));
        }
        Ok((self.base_size + 2 + (i - 1)) as TokenId)
    }

    pub fn is_lookahead(&self, token: TokenId) -> bool {
        (token as usize) >= self.base_size + 2 && (token as usize) < self.total_size()
    }

    /// Maps raw bytes to base token ids. Fails for bytes outside a
    /// reduced base vocabulary (test configurations with base < 256).
    pub fn encode(&self, bytes: &[u8]) -> Result<Vec<TokenId>> {
        bytes
            .iter()
            .map(|&b| {
                if (b as usize) < self.base_size {
                    Ok(b as TokenId)
                } else {
                    Err(Error::Data(format!(
                        "byte {b} outside base vocabulary of size {}",
                        self.base_size
                    )))
                }
            })
            .collect()
    }

    /// Maps token ids back to bytes, skipping specials and look-ahead ids.
    pub fn decode(&self, tokens: &[TokenId]) -> Vec<u8> {
        tokens
            .iter()
            .filter(|&&t| (t as usize) < self.base_size)
            .map(|&t| t as u8)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn id_layout() {
        let v = Vocab::byte_level(4);
        assert_eq!(v.bos(), 256);
        assert_eq!(v.unk(), 257);
        assert_eq!(v.lookahead_token(1).unwrap(), 258);
        assert_eq!(v.lookahead_token(4).unwrap(), 261);
        assert!(v.lookahead_token(5).is_err());
        assert!(v.lookahead_token(0).is_err());
        assert_eq!(v.total_size(), 262);
        assert_eq!(v.output_size(), 258);
        assert!(v.is_lookahead(258));
        assert!(v.is_lookahead(261));
        assert!(!v.is_lookahead(257));
        assert!(!v.is_lookahead(262));
    }

    #[test]
    fn reduced_base_rejects_out_of_range_bytes() {
        let v = Vocab::new(64, 2).unwrap();
        assert!(v.encode(&[0, 17, 63]).is_ok());
        assert!(v.encode(&[200]).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let v = Vocab::byte_level(4);
            let tokens = v.encode(&bytes).unwrap();
            prop_assert_eq!(v.decode(&tokens), bytes);
        }

        #[test]
        fn decode_skips_specials(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let v = Vocab::byte_level(2);
            let mut tokens = vec![v.bos()];
            tokens.extend(v.encode(&bytes).unwrap());
            tokens.push(v.unk());
            tokens.push(v.lookahead_token(1).unwrap());
            prop_assert_eq!(v.decode(&tokens), bytes);
        }
    }
}
