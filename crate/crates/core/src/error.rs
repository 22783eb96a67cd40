use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("malformed {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("duplicate blob name {0:?}")]
    DuplicateBlob(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("marker exceeds mask at row {row}, column {col}")]
    MarkerAboveMask { row: usize, col: usize },

    #[error("no peaks survive extraction (h = {h})")]
    EmptyPeaks { h: f64 },

    #[error("point set is empty: {0}")]
    EmptyPointSet(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("linear system is singular after ridge guard (size {size})")]
    SingularSystem { size: usize },

    #[error("numeric underflow: {0}")]
    NumericUnderflow(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("area of interest too small: {0}")]
    AoiTooSmall(String),

    #[error("zero total volume under mask")]
    ZeroVolume,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI and HTTP layers.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Image(_) => "decode",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidPolygon(_) => "invalid_polygon",
            Error::DuplicateBlob(_) => "duplicate_blob",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ShapeMismatch(_) | Error::MarkerAboveMask { .. } => "shape",
            Error::EmptyPeaks { .. } => "empty_peaks",
            Error::EmptyPointSet(_) => "empty_point_set",
            Error::NonFinite(_) | Error::SingularSystem { .. } | Error::NumericUnderflow(_) => {
                "numeric"
            }
            Error::UndefinedCorrelation(_) | Error::AoiTooSmall(_) | Error::ZeroVolume => "metric",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            message: message.into(),
        }
    }
}
