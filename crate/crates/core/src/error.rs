use std::path::PathBuf;

use thiserror::Error;

/// Which region of a mask turned out to be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Inner,
    Outer,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::Inner => f.write_str("inner"),
            Region::Outer => f.write_str("outer"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("region is empty")]
    EmptyRegion,

    #[error("sample length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate mask: {0} region is empty")]
    DegenerateMask(Region),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layer at ({row}, {col}) with size {width}x{height} does not fit a {canvas_width}x{canvas_height} canvas")]
    OutOfCanvas {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
        canvas_width: usize,
        canvas_height: usize,
    },

    #[error("no manifest.json under {0}")]
    MissingManifest(PathBuf),

    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("variant set {label} does not align with the reference: {reason}")]
    Alignment { label: String, reason: String },

    #[error("no evaluable records ({skipped} skipped)")]
    NoEvaluableRecords { skipped: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
