//! Error taxonomy shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible tensor shapes or index out of bounds.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input values outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument violates a documented precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An experiment or module configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API contract was violated (e.g. backward on a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    /// A numeric result left the finite range.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized artifact failed to decode.
    #[error("format error: {0}")]
    Format(String),

    /// Training diverged or could not proceed.
    #[error("training error: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
