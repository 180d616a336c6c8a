use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("token index {index} out of range for vocabulary of size {size}")]
    TokenOutOfRange { index: usize, size: usize },
    #[error("duplicate token {0:?} in vocabulary")]
    DuplicateToken(String),
    #[error("empty biasing list")]
    EmptyBiasingList,
    #[error("duplicate biasing phrase {0:?}")]
    DuplicatePhrase(String),
    #[error("biasing phrase {phrase:?} has length {len}, expected 2..=19")]
    PhraseLength { phrase: String, len: usize },
    #[error("utterance {id}: {reason}")]
    InvalidUtterance { id: String, reason: String },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("empty reference sequence")]
    EmptyReference,
    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),
    #[error("audio duration must be positive")]
    ZeroDuration,
}
