use thiserror::Error;

/// Errors raised by mesh generation, assembly, factorization and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region selects every triangle of the mesh, but a proper subset was required")]
    RegionCoversDomain,

    #[error("region specification selected no triangles")]
    EmptySelection,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("point ({0}, {1}) lies outside the reference triangle")]
    OutOfDomain(f64, f64),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("matrix is numerically singular (pivot column {column})")]
    SingularMatrix { column: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("pressure constraint eliminates every pressure degree of freedom")]
    OverConstrained,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no convergence after {iterations} iterations (last estimate {last_value:e})")]
    Convergence {
        iterations: usize,
        last_value: f64,
        last_vector: Vec<f64>,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
