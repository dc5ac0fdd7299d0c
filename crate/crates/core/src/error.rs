use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("Sylvester operator is nearly singular (condition estimate {condition:.3e})")]
    NearSingularSylvester { condition: f64 },

    #[error("matrix is rank deficient (smallest/largest eigenvalue ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("dual frame is unique for a square frame")]
    UniqueDual,

    #[error("coefficient Gram matrix XX^T is numerically singular")]
    SingularCoefficientGram,

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, gap {gap:.3e})")]
    SolverDidNotConverge {
        iterations: usize,
        residual: f64,
        gap: f64,
    },

    #[error("problem too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("columns are not in general position (spark {spark}, expected {expected})")]
    NotGeneralPosition { spark: usize, expected: usize },

    #[error("no linearity violation found after {trials} trials")]
    NoViolationFound { trials: usize },

    #[error("block {block} has no observed pixel")]
    EmptyBlockMask { block: usize },

    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training aborted at iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file at byte {offset}: {message}")]
    MalformedFile { offset: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
