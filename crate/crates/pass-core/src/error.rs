//! Error type shared by every module in the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A sequence or cache would exceed the model's maximum length.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// An operation was invoked in a state where it is not meaningful.
    #[error("invalid state: {0}")]
    State(String),

    /// A checkpoint or manifest file is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Corpus content cannot support the requested operation.
    #[error("data error: {0}")]
    Data(String),

    /// Models, checkpoints, or decode settings are inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerically degenerate case (e.g. empty residual mass).
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// An internal contract was violated; indicates a bug in the caller.
    #[error("logic error: {0}")]
    Logic(String),
}
