use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("at least two cameras are required, got {0}")]
    TooFewCameras(usize),

    #[error("duplicate camera id {0:?}")]
    DuplicateCamera(String),

    #[error("camera {camera:?}: missing frame directory {path}")]
    MissingDirectory { camera: String, path: PathBuf },

    #[error("camera {camera:?}: frame count mismatch, expected {expected} frames, found {found}")]
    FrameCountMismatch {
        camera: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown reference camera {0:?}")]
    UnknownReference(String),

    #[error("frame index {index} out of range 1..={count}")]
    FrameOutOfRange { index: usize, count: usize },

    #[error("camera {camera:?}: failed to decode frame {index}: {message}")]
    Decode {
        camera: String,
        index: usize,
        message: String,
    },

    #[error("image dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient correspondences between cameras {a:?} and {b:?}: {found} < {required}")]
    InsufficientCorrespondences {
        a: String,
        b: String,
        found: usize,
        required: usize,
    },

    #[error("at least 4 correspondences are required, got {0}")]
    TooFewPoints(usize),

    #[error("degenerate point configuration")]
    Degenerate,

    #[error("calibration failed for camera {0:?}")]
    CalibrationFailed(String),

    #[error("no calibration frame found after frame {0}")]
    NoCalibrationFrame(usize),

    #[error("fewer than 2 frames")]
    TooFewFrames,

    #[error("no data: {0}")]
    NoData(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
