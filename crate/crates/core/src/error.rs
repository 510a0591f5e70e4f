use thiserror::Error;

/// Failure categories shared by every module in the crate.
///
/// The CLI maps these onto process exit codes, so the variants are coarse on
/// purpose: callers match on the category and read the message for detail.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes or lengths that do not line up (e.g. Pauli words of different size).
    #[error("structural error: {0}")]
    Structural(String),
    /// A requested object would be too large to materialize densely.
    #[error("resource error: {0}")]
    Resource(String),
    /// A quantity that must be real, Hermitian, or a probability is not.
    #[error("numerical integrity error: {0}")]
    NumericalIntegrity(String),
    /// An iterative numerical routine (eigensolver, linear solve) failed.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Invalid user configuration.
    #[error("config error: {0}")]
    Config(String),
    /// An operation was called outside of its documented contract.
    #[error("contract error: {0}")]
    Contract(String),
    /// An argument lies outside the mathematical domain of the map.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
