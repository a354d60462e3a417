use std::path::PathBuf;

use crate::poisson::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid {width}x{height} is too small, both sides must be at least {min}")]
    GridTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("degenerate field: {0}")]
    DegenerateField(&'static str),
    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("truncated file: expected {expected} bytes, got {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("poisson solve did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    NotConverged(SolveReport),
    #[error("region {0} is outside the {1}x{2} field")]
    RegionOutOfBounds(crate::field::Rect, usize, usize),
    #[error("region {0} is smaller than 4x4 cells")]
    RegionTooSmall(crate::field::Rect),
    #[error("component mask selects nothing")]
    EmptyMask,
    #[error("sketch has no foreground pixels")]
    EmptySketch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::GridTooSmall { .. } => "GridTooSmall",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::DegenerateField(_) => "DegenerateField",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::BadDimensions(_) => "BadDimensions",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::NotConverged(_) => "NotConverged",
            Error::RegionOutOfBounds(..) => "RegionOutOfBounds",
            Error::RegionTooSmall(_) => "RegionTooSmall",
            Error::EmptyMask => "EmptyMask",
            Error::EmptySketch => "EmptySketch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Parse { .. } => "Parse",
            Error::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
