//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by key generation, codec, verification, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An operation that divides by a vector norm received a zero vector.
    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    /// A value was NaN or infinite where finite input is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A mathematically degenerate input, e.g. a transform mapping the
    /// embedding to zero.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Key generation exhausted its attempt budget.
    #[error(
        "key generation failed after {attempts} attempts; best condition number seen {best_condition:.3e}"
    )]
    GenerationFailed { attempts: u32, best_condition: f64 },

    /// Suspect/original lists are not id-aligned.
    #[error("id misalignment between suspect and original lists: {}", ids.join(", "))]
    IdMisalignment { ids: Vec<String> },

    /// A batch operation aborted on a record.
    #[error("record '{id}': {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    /// A corpus line failed to parse or validate.
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },

    /// Unsupported key shape for the requested analysis.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn for_record(id: &str, source: Error) -> Self {
        Error::Record {
            id: id.to_string(),
            source: Box::new(source),
        }
    }
}
