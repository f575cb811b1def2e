use thiserror::Error;

/// Errors raised across the symbolic and numeric layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate frame at {point:?}: determinant {det:e}")]
    DegenerateFrame { point: Vec<f64>, det: f64 },
    #[error("patch mismatch: {0}")]
    PatchMismatch(String),
    #[error("weight undefined: {0}")]
    WeightUndefined(String),
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("cut-off required: kernel mass {leak:e} outside the injectivity radius")]
    CutoffRequired { leak: f64 },
    #[error("not a grid value of t: {0}")]
    NonGridT(f64),
    #[error("t=0 extrapolation unstable at {location}: consistency {consistency:e} (reduce the t-grid)")]
    UnstableExtrapolation { location: String, consistency: f64 },
    #[error("not homogeneous: {0}")]
    NotHomogeneous(String),
    #[error("not H-elliptic: symbol {value:e} at x={x:?}, eta={eta:?}")]
    NotElliptic { x: Vec<f64>, eta: Vec<i64>, value: f64 },
    #[error("refine grid: {0}")]
    RefineGrid(String),
    #[error("non-convergent: {0}")]
    NonConvergent(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
