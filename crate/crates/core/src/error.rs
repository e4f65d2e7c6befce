use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while reading an `$`-annotated string.
///
/// Offsets are character offsets into the annotated string, `$` markers included.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced `$` at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("nested or adjacent annotation at offset {offset}")]
    Nested { offset: usize },
    #[error("repeated `$$` marker at offset {offset}")]
    DuplicateMissing { offset: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("span ({start}, {end}) is invalid for a text of {text_len} characters")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        text_len: usize,
    },

    #[error("overlapping spans ({0}, {1}) and ({2}, {3})")]
    Overlap(usize, usize, usize, usize),

    #[error("text length mismatch: expected {expected}, found {found}")]
    TextLenMismatch { expected: usize, found: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("zero-length span at {position} has no preceding token to carry the M label")]
    NoCarrierToken { position: usize },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("missing gold records for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
