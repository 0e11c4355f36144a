use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward: {0}")]
    Backward(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("weight file: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("weight file: unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("weight file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("weight file does not match its config: {0}")]
    WeightMismatch(String),

    #[error("adam: missing gradient for parameter {0}")]
    MissingGradient(String),

    #[error("non-finite training loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("empty ground truth mask")]
    EmptyGroundTruth,

    #[error("empty mask")]
    EmptyMask,

    #[error("pgm {path}: {detail}")]
    Pgm { path: PathBuf, detail: String },

    #[error("mask {path} is not binary: found value {value}")]
    NonBinaryMask { path: PathBuf, value: u8 },

    #[error("image/mask size mismatch for {stem}: image {image:?}, mask {mask:?}")]
    PairSize {
        stem: String,
        image: (usize, usize),
        mask: (usize, usize),
    },

    #[error("unpaired files in {dir}: {stems:?}")]
    Unpaired { dir: PathBuf, stems: Vec<String> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short stable identifier used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Backward(_) => "backward",
            Error::Config(_) => "config",
            Error::BadMagic(_) => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Truncated(_) => "truncated",
            Error::WeightMismatch(_) => "weight-mismatch",
            Error::MissingGradient(_) => "missing-gradient",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::EmptyGroundTruth => "empty-ground-truth",
            Error::EmptyMask => "empty-mask",
            Error::Pgm { .. } => "pgm",
            Error::NonBinaryMask { .. } => "non-binary-mask",
            Error::PairSize { .. } => "pair-size",
            Error::Unpaired { .. } => "unpaired",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
