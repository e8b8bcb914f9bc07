use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: no edges or matrix entries")]
    EmptyInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("infinite-horizon Gramian undefined: A is not stable (max real part {max_real_part}); use a finite horizon")]
    InfiniteHorizonUnstable { max_real_part: f64 },

    #[error("Lyapunov solve ill-posed: min |λi + λj| = {separation:e}")]
    LyapunovIllPosed { separation: f64 },

    #[error("matrix exponential overflow (‖At‖₁ = {norm:e})")]
    ExponentialOverflow { norm: f64 },

    #[error("point is infeasible: weighted Gramian is not positive definite")]
    Infeasible,

    #[error("line search stalled after {backtracks} backtracks")]
    LineSearchStalled { backtracks: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("Gramian basis unavailable: {0}")]
    BasisUnavailable(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
