use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid array or scenario configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An index or subarray lies outside its parent array.
    #[error("range error: {0}")]
    Range(String),

    /// Matrix or vector shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A coherent group cancels out on one of the arrays.
    #[error("group {group} vanishes on array {array}: coefficients sum to zero within an ambiguity class")]
    VanishingGroup { group: usize, array: String },

    /// The virtual ULA has holes in its contiguous lag range.
    #[error("missing coarray lags: {0:?}")]
    MissingLags(Vec<i64>),

    /// Two independent computations of the same quantity disagree.
    #[error("numerical mismatch: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
