use thiserror::Error;

use crate::grid::ImageGrid;
use crate::solve::SolveReport;

pub type Result<T> = std::result::Result<T, SedsError>;

#[derive(Debug, Error)]
pub enum SedsError {
    #[error("spot size must be odd, got {0}")]
    EvenSize(usize),

    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },

    #[error("unknown kind `{0}`")]
    UnknownKind(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("spot ({spot}x{spot}) is larger than the ROI ({rows}x{cols}); no coarse-scan image")]
    SpotLargerThanRoi { spot: usize, rows: usize, cols: usize },

    #[error("explicit assembly of {n} rows exceeds the cap of {cap}")]
    DimensionOverflow { n: usize, cap: usize },

    #[error("vector length {got} does not match system size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid dimensions {left:?} and {right:?} differ")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("measurement mode mismatch: expected {expected}, got {got}")]
    ModeMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("measurement spot size {measured} does not match kernel size {kernel}")]
    SpotMismatch { measured: usize, kernel: usize },

    #[error("DDS margin {margin} is smaller than the spot half-width {half}")]
    MarginTooSmall { margin: usize, half: usize },

    #[error("reference image has zero mean")]
    ZeroMeanReference,

    #[error("system is singular: pivot {pivot:e} at column {column} below threshold {threshold:e}")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("direct solve requires an explicitly assembled matrix")]
    NotExplicit,

    #[error(
        "iterative solve did not converge after {} iterations (residual {:e})",
        .report.iterations,
        .report.residual_norm
    )]
    NotConverged {
        /// Best iterate found before giving up.
        image: Box<ImageGrid>,
        report: SolveReport,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
