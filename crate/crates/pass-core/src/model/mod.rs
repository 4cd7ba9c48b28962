//! Toy decoder-only causal transformer: vocabulary, weights, KV cache,
//! cached/recorded forward passes, and checkpoint I/O.

mod cache;
mod checkpoint;
mod config;
mod forward;
mod record;
mod vocab;
mod weights;

pub use cache::KVCache;
pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use config::{ModelConfig, LAYERNORM_EPS};
pub use forward::{LookaheadForward, Model};
pub use record::{BackwardResult, ForwardRecord, LayerGrads, ParamGrads};
pub use vocab::{Vocab, BYTE_BASE_SIZE};
pub use weights::{LayerWeights, ModelWeights};
