use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 2 frames in {dir}, found {found}")]
    MissingFrames { dir: PathBuf, found: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("{path}: bad .flo sanity constant {found}")]
    BadMagic { path: PathBuf, found: f32 },

    #[error("{path}: truncated file (expected {expected} bytes, got {found})")]
    TruncatedFile {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("non-finite flow value at ({x}, {y})")]
    NonFiniteValue { x: usize, y: usize },

    #[error("proposal has an empty boundary")]
    EmptyBoundary,

    #[error("proposal has an empty mask")]
    EmptyMask,

    #[error("empty pixel input")]
    EmptyInput,

    #[error("BoW dictionary is empty")]
    EmptyDictionary,

    #[error("histogram block layout mismatch: {0:?} vs {1:?}")]
    BlockMismatch(Vec<usize>, Vec<usize>),

    #[error("trimap thresholds must satisfy theta1 > theta2 (got {theta1}, {theta2})")]
    BadThresholds { theta1: u32, theta2: u32 },

    #[error("cost matrix is empty")]
    EmptyMatrix,

    #[error("sequence length mismatch: {predicted} predicted vs {truth} ground-truth frames")]
    LengthMismatch { predicted: usize, truth: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} strategy '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFrames { .. } => "MissingFrames",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Decode { .. } => "Decode",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::EmptyBoundary => "EmptyBoundary",
            Error::EmptyMask => "EmptyMask",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyDictionary => "EmptyDictionary",
            Error::BlockMismatch(..) => "BlockMismatch",
            Error::BadThresholds { .. } => "BadThresholds",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnknownStrategy { .. } => "UnknownStrategy",
            Error::Invariant(_) => "Invariant",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Process exit status: 2 for bad input, 3 for internal invariant failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}
