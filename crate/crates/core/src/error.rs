use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are grouped by [`ErrorKind`] so callers (the CLI and the C ABI)
/// can map them onto stable exit or status codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },

    #[error("label out of range: row {row} has label {label}, class count is {classes}")]
    LabelOutOfRange { row: usize, label: i64, classes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("class {0} has no eligible rows in the index")]
    EmptyClass(usize),

    #[error("k = {k} exceeds the {rows} indexed rows")]
    KTooLarge { k: usize, rows: usize },

    #[error("every target class is empty; no counterfactual could be computed")]
    NoTargets,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("logits are required to select the top {k} of {classes} target classes")]
    MissingLogits { k: usize, classes: usize },

    #[error("counterfactual search for class {target} did not flip the prediction; the anchor row {anchor} is not predicted as {target}")]
    NoFlip { target: usize, anchor: usize },

    #[error("input refs are missing; supply a refs_path in the dataset manifest")]
    MissingRefs,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty score set: {0}")]
    EmptyScores(&'static str),

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Degenerate,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Degenerate(_) | Error::NoTargets => ErrorKind::Degenerate,
            Error::Row { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    /// Wraps the error with the batch row it came from.
    pub fn at_row(self, row: usize) -> Self {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
