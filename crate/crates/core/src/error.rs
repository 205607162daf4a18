use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coupling matrix violates the monotonicity conditions: {0}")]
    MonotonicityViolated(String),
    #[error("matrix has a negative entry at ({row}, {col}): {value}")]
    NotNonnegative { row: usize, col: usize, value: f64 },
    #[error("coupling matrix is not irreducible (separating set {0:?})")]
    NotIrreducible(Vec<usize>),
    #[error("row {row} of the coupling matrix sums to {sum}, expected 0")]
    RowSumsNonzero { row: usize, sum: f64 },
    #[error("cofactor matrix is numerically zero")]
    DegenerateCofactor,
    #[error("kernel dimension is {0}, expected 1")]
    KernelDimNotOne(usize),
    #[error("equation index {index} out of range for m = {m}")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("time step {dt} violates the monotonicity bound {bound}")]
    CflViolated { dt: f64, bound: f64 },
    #[error("non-finite or diverging value at t = {t} (sup norm {norm})")]
    NonFiniteValue { t: f64, norm: f64 },
    #[error(
        "pseudo-time iteration did not converge in {iterations} iterations (residual {residual})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("a priori bound violated: {0}")]
    BoundViolated(String),
    #[error("vanishing-discount trace is not Cauchy: {0}")]
    ExtrapolationUnstable(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("the set A is empty on this grid")]
    EmptyAubrySet,
    #[error("cell {0} is not in the set A")]
    CellNotInAubrySet(usize),
    #[error("trajectory covers {covered} time units, need at least {needed}")]
    InsufficientHorizon { covered: f64, needed: f64 },
    #[error("dynamic programming step violates stability: {0}")]
    StabilityViolated(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
