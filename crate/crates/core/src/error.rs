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
    #[error("input directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("no frames matched pattern `{pattern}` in {dir}")]
    NoFramesMatched { dir: PathBuf, pattern: String },
    #[error("invalid filename pattern `{0}`")]
    BadPattern(String),
    #[error("{path}: {reason}")]
    BadImage { path: PathBuf, reason: String },
    #[error("{path}: unsupported bit depth (maxval {maxval}, only 255 is supported)")]
    UnsupportedBitDepth { path: PathBuf, maxval: u32 },
    #[error("frame {index}: dimensions {got:?} differ from sequence dimensions {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("max-reduction window: {0}")]
    Window(String),
    #[error("line fit needs at least two distinct points")]
    DegenerateFit,
    #[error("frame {got} is out of order (expected {expected})")]
    FrameOrder { expected: usize, got: usize },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
