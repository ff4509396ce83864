use std::io;

use thiserror::Error;

/// Crate-wide error type. Variants separate the failure families callers
/// react to differently: file problems, malformed containers, internal
/// inconsistencies, exhausted resources, bad shapes or arguments, and
/// numeric breakdown during optimization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// A file or serialized blob does not follow its declared layout.
    #[error("format error: {0}")]
    Format(String),

    /// Two pieces of data that must agree do not (counts, dims, versions).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A request exceeds what the data or an algorithm budget can supply.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Array dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument is outside the legal range of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite value appeared where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
