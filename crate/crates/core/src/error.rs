use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("ray is not unit length (norm = {norm})")]
    NonUnitRay { norm: f64 },

    #[error("undistortion did not converge: residual {residual:e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },

    #[error("point is behind the camera (z = {depth})")]
    BehindCamera { depth: f64 },

    #[error("limb {edge} ({from} -> {to}) has near-zero length")]
    DegenerateLimb { edge: usize, from: usize, to: usize },

    #[error("root depth is undetermined: every joint is aligned with the root ray")]
    DegenerateConfiguration,

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("all weighted densities are zero")]
    AllZeroDensities,

    #[error("no valid ray for pixel")]
    InvalidRay,

    #[error("pixel (row {row}, col {col}): {source}")]
    AtPixel {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient in block `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("loss became non-finite at iteration {iteration}")]
    DivergenceDetected { iteration: usize },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("bad magic bytes, not a feature image")]
    MagicMismatch,

    #[error("unsupported feature image version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("channel {channel} out of range for {channels}-channel image")]
    BadChannel { channel: usize, channels: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of the numerics rather than of the inputs' shape or syntax.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoConvergence { .. }
            | Error::DivergenceDetected { .. }
            | Error::NonFiniteGradient(_)
            | Error::AllZeroDensities
            | Error::InvalidRay
            | Error::DegenerateConfiguration => true,
            Error::AtPixel { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_pixel(self, row: usize, col: usize) -> Self {
        Error::AtPixel {
            row,
            col,
            source: Box::new(self),
        }
    }
}
