//! Crate-wide error type.

/// Errors produced by pattern construction, simulation, reconstruction and
/// file IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix order outside the supported set (powers of two up to 4096).
    #[error("invalid matrix order {0}: must be a power of two in 1..=4096")]
    InvalidOrder(usize),

    /// The scramble search exhausted its budget without meeting the run
    /// limit; `achieved` is the smallest maximum run any candidate reached.
    #[error(
        "run limit {limit} not satisfied after {attempts} candidates; \
         smallest achieved run was {achieved}"
    )]
    RunLimitInfeasible {
        limit: usize,
        achieved: usize,
        attempts: usize,
    },

    /// A parameter failed validation; `field` names the offending entry.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// Arrays or streams with incompatible shapes were combined.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Inputs whose provenance digests disagree were combined.
    #[error("digest mismatch: {0}")]
    DigestMismatch(String),

    /// A file did not conform to its declared format; `offset` is the byte
    /// position at which decoding failed.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
