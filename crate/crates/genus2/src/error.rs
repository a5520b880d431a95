use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("characteristic {p} exceeds the configured limit {limit}")]
    CharTooLarge { p: u64, limit: u64 },
    #[error("field order p^k does not fit in 63 bits")]
    FieldTooLarge,
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("operands live over different fields")]
    FieldMismatch,
    #[error("zero polynomial")]
    ZeroPoly,
    #[error("not alternating: {0}")]
    NotAlternating(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
