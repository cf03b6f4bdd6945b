use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed RIFF/WAVE container; `chunk` names the offending chunk.
    #[error("wav decode error in `{chunk}` chunk: {reason}")]
    Decode { chunk: String, reason: String },

    #[error("unsupported wav encoding: format tag {format_tag}, {bits} bits per sample")]
    UnsupportedFormat { format_tag: u16, bits: u16 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("value {value} for `{name}` outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn decode(chunk: &str, reason: impl Into<String>) -> Self {
        Error::Decode {
            chunk: chunk.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl std::fmt::Display, got: impl std::fmt::Display) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by numeric breakdown (NaN/inf) rather than bad data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
