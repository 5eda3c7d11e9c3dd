use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vertex index {index} out of range for {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },

    #[error("vertex count mismatch: {left} vs {right}")]
    VertexCountMismatch { left: usize, right: usize },

    #[error("invalid multigraph: {0}")]
    InvalidGraph(String),

    #[error("{what} has {size} vertices, above the cap of {cap}")]
    SizeCap { what: &'static str, size: usize, cap: usize },

    #[error("odd number of elements ({0}) cannot be paired")]
    OddSize(usize),

    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid quadrature rule: {0}")]
    InvalidRule(String),

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("covariance factorization failed at jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("term budget exceeded: {count} > {budget}")]
    BudgetExceeded { count: u64, budget: u64 },

    #[error("size guard tripped: {0}")]
    Guard(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by cost guards rather than bad input.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::SizeCap { .. } | Error::BudgetExceeded { .. } | Error::Guard(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
