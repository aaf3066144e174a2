use std::path::PathBuf;

/// Errors produced by image I/O, tree construction, tracking and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("channel dimensions differ: {0}")]
    ChannelDimensions(String),
    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("invalid config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("rectangle does not intersect the image")]
    EmptyIntersection,
    #[error("channel count mismatch: {0} vs {1}")]
    ChannelCount(usize, usize),
    #[error("pixel index {0} out of range")]
    PixelOutOfRange(usize),
    #[error("level {level} outside [0, {max}]")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("invalid node id {0}")]
    InvalidNode(usize),
    #[error("empty region")]
    EmptyRegion,
    #[error("lambda {0} outside [0, 1]")]
    InvalidLambda(f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("no MSHR in init region (component tree has {nodes} nodes)")]
    NoMshr { nodes: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame count mismatch: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("empty mask")]
    EmptyMask,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
