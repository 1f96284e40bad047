use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("world generation failed: {0}")]
    Generation(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("trajectory validation failed: {0}")]
    Validation(String),
    #[error("non-finite value in loss term {term}")]
    NonFinite { term: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
