use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operand mismatch: {0}")]
    Mismatch(String),
    #[error("polynomial is in the wrong domain for {0}")]
    Domain(&'static str),
    #[error("insufficient levels: {0}")]
    LevelExhausted(String),
    #[error("scale mismatch: {0} vs {1}")]
    ScaleMismatch(f64, f64),
    #[error("missing rotation key for step {0}")]
    MissingRotationKey(i64),
    #[error("ciphertext has {0} parts; relinearize before decrypting")]
    NotRelinearized(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("serialization: {0}")]
    Format(String),
    #[error("parameter digest mismatch")]
    DigestMismatch,
    #[error("training data must contain both classes")]
    SingleClass,
}

pub type Result<T> = core::result::Result<T, Error>;
