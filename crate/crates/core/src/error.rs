use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "unsupported aspect {aspect_w}:{aspect_h} for {src_w}x{src_h} source (only horizontal expansion is supported)"
    )]
    UnsupportedAspect {
        aspect_w: u32,
        aspect_h: u32,
        src_w: u32,
        src_h: u32,
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (u32, u32), actual: (u32, u32) },

    #[error("singular transform (|det| = {0:e})")]
    SingularTransform(f64),

    #[error("sample at ({x}, {y}) is outside the {width}x{height} raster")]
    OutOfBounds { x: f64, y: f64, width: u32, height: u32 },

    #[error("stitching failed: {0}")]
    StitchFailure(String),

    #[error("remote masker: {0}")]
    RemoteMasker(String),

    #[error("remote outpainter: {0}")]
    RemoteOutpainter(String),

    #[error("outpaint request has no known seed pixels")]
    NoSeedPixels,

    #[error("canvas incomplete: {0} unknown cells inside the frame rect")]
    IncompleteCanvas(usize),

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error("scene spec: {0}")]
    Spec(String),

    #[error("{message}")]
    Environment { message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png: {0}")]
    Png(String),

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

    /// Process exit code for the CLI: 1 input, 2 environment, 3 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Environment { .. } => 2,
            Error::InvariantViolation(_) | Error::IncompleteCanvas(_) => 3,
            _ => 1,
        }
    }
}
