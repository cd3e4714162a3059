use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CtgError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("column length mismatch at line {line}: expected {expected} fields, found {found}")]
    LengthMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("record contains no samples")]
    EmptyRecord,

    #[error("trace too short: {duration_s:.1} s (need at least {required_s:.0} s)")]
    TooShort { duration_s: f64, required_s: f64 },

    #[error("every FHR sample is missing")]
    AllGaps,

    #[error("baseline could not be determined")]
    BaselineIndeterminable,

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("wrong feature set: {0}")]
    WrongFeatureSet(String),

    #[error("scenario episodes overlap: {0}")]
    Overlap(String),

    #[error("scenario value out of range: {0}")]
    OutOfRange(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CtgError>;
