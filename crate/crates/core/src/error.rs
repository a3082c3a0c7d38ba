use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("value {x} is not above the quantisation offset {offset}")]
    BelowOffset { x: f64, offset: f64 },

    #[error("count {count} does not fit in a {bits}-bit slot")]
    SlotOverflow { count: u64, bits: u32 },

    #[error("{guard_bits} guard bits cannot absorb a sum of {k_max} slots (need {needed})")]
    InsufficientGuardBits {
        guard_bits: u32,
        k_max: usize,
        needed: u32,
    },

    #[error("plaintext does not fit below the key modulus")]
    PlaintextTooLarge,

    #[error("ciphertext is not in [0, n^2)")]
    MalformedCiphertext,

    #[error("no ciphertexts to add")]
    EmptyAggregation,

    #[error("ciphertext layouts differ")]
    LayoutMismatch,

    #[error("key generation failed: {0}")]
    KeyGeneration(String),

    #[error("serialisation: {0}")]
    Serialization(String),

    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    IdxMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated IDX file")]
    IdxTruncated { path: PathBuf },

    #[error("IDX image count {images} does not match label count {labels}")]
    IdxLengthMismatch { images: usize, labels: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
