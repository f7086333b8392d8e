use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Pipeline,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampling grid is not symmetric about the origin (offset {0:?} mm)")]
    AsymmetricGrid((f64, f64)),

    #[error("aliasing for grating period {period_mm} mm: {detail}")]
    Aliasing { period_mm: f64, detail: String },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("need at least {needed} frames, got {got}")]
    InsufficientFrames { needed: u64, got: u64 },

    #[error("incompatible accumulators: {0}")]
    Incompatible(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual:.6e})")]
    FitDiverged { iterations: usize, residual: f64 },

    #[error("degenerate calibration: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated stack: header declares {expected} frames, payload holds {actual} (file is {file_len} bytes, expected {expected_len})")]
    Truncated {
        expected: u64,
        actual: u64,
        file_len: u64,
        expected_len: u64,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path:?}{}: {source}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    Io {
        path: Option<PathBuf>,
        frame: Option<u64>,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Config,
            Error::Format { .. } | Error::Truncated { .. } | Error::Io { .. } => ErrorKind::Data,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Pipeline,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            frame: None,
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io {
            path: None,
            frame: None,
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
