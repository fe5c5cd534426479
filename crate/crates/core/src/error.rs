use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate pose: {0}")]
    DegeneratePose(String),

    #[error("pose is already normalized")]
    AlreadyNormalized,

    #[error("pose must be in raw pixel units")]
    NotRaw,

    #[error("too few visible joints: {visible} (at least {required} required)")]
    TooFewObservations { visible: usize, required: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("incomplete distance matrix: joint {joint} has an all-zero row")]
    IncompleteMatrix { joint: usize },

    #[error("joint {joint} is behind the camera (depth {depth} mm)")]
    BehindCamera { joint: usize, depth: f64 },

    #[error("correlation undefined: {0}")]
    CorrelationUndefined(String),

    #[error("unknown occlusion kind `{0}`")]
    UnknownMaskKind(String),

    #[error("invalid skeleton: {0}")]
    Skeleton(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{}:{line}: {msg}", path.display())]
    Record { path: PathBuf, line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
