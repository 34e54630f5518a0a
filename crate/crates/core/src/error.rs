use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or covariance parameter outside its legal range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed arguments: bad indices, mismatched lengths, non-finite inputs.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Cholesky failed at the given (1-based) leading minor even after jitter.
    #[error("matrix not positive definite at leading minor {minor} (after jitter up to {max_jitter:e})")]
    NotPositiveDefinite { minor: usize, max_jitter: f64 },

    /// A window's factorization failed; `center` is the 1-based hypothesis index.
    #[error("window centred at hypothesis {center}: {source}")]
    Window {
        center: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The brute-force oracle refuses problems beyond its enumeration limit.
    #[error("brute-force oracle refuses K = {k} (limit {limit})")]
    TooLarge { k: usize, limit: usize },

    /// Error with a pipeline-step or replicate label attached.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
