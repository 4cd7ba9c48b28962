//! Single-model parallel speculative sampling at desk scale.
//!
//! The crate implements three generation strategies over a small
//! trainable causal transformer — plain autoregressive decoding,
//! classic two-model speculative sampling, and single-model parallel
//! speculative sampling driven by trainable look-ahead embeddings —
//! together with the training recipes, a benchmark grid, and the
//! verification suites that prove the sampling scheme is loss-less.

pub mod bench;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod model;
pub mod reference;
pub mod sampling;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};

/// Index into the vocabulary.
pub type TokenId = u32;
