use std::path::PathBuf;

/// Errors produced by the camera-height pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("frame unusable: {0}")]
    FrameUnusable(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("horizon is at infinity (road normal parallel to the optical axis)")]
    HorizonAtInfinity,

    #[error("frame has no valid scale measurement")]
    NoScale,

    #[error("no size prior for instance {id}")]
    MissingPrior { id: u32 },

    #[error("loss undefined: {0}")]
    UndefinedLoss(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach the file the error relates to.
    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical stages (as opposed to bad data or configuration).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::File { source, .. } => source.is_numerical(),
            Error::Degenerate(_)
            | Error::HorizonAtInfinity
            | Error::UndefinedLoss(_)
            | Error::Diverged(_)
            | Error::NoScale => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
