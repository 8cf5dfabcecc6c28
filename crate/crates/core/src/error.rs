use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be an even integer >= 4, got {0}")]
    InvalidGrid(usize),

    #[error("grid mismatch: expected {expected} modes per axis, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("field has {found} values, grid needs {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("mollifier scale {delta} is below two grid spacings ({min})")]
    UnderResolved { delta: f64, min: f64 },

    #[error("non-finite value encountered (exploded)")]
    Exploded,

    #[error("solver fault: {0}")]
    SolverFault(String),

    #[error("need derivatives up to order {needed}, only {available} supplied")]
    InsufficientDerivatives { needed: usize, available: usize },

    #[error("Taylor term of order {0} is not available")]
    MissingTerm(usize),

    #[error("trajectory must be recorded at every time step (record stride {0})")]
    StrideMismatch(usize),

    #[error("series exponential needs a zero constant term, got {0}")]
    NonZeroConstantTerm(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
