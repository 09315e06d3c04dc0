use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 1, got {0}")]
    InvalidDim(usize),

    #[error("dimension mismatch: expected {expected} coordinates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid barycentric point: {0}")]
    InvalidPoint(String),

    #[error("vector is not in the required set: {0}")]
    InvalidVector(String),

    #[error("point lies outside the chart domain: {0}")]
    OutsideDomain(String),

    #[error("symmetric-group enumeration is capped at d = {max}, got d = {d}")]
    TooLarge { d: usize, max: usize },

    #[error("side mismatch: {0}")]
    SideMismatch(String),

    #[error("invalid face: {0}")]
    InvalidFace(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("function is not G-invariant (defect {0:e})")]
    NotSymmetric(f64),

    #[error(
        "target mass {found} does not match the required normalization \
         (d+2)^(d+1)/d! = {expected}"
    )]
    MassNormalization { expected: f64, found: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("function is not convex at the query point: {0}")]
    NotConvex(String),

    #[error("Monte Carlo tolerance {tol:e} is below 3x the aggregate standard error {se:e}")]
    NoiseFloor { tol: f64, se: f64 },

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
