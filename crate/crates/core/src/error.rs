use thiserror::Error;

/// Errors produced by grid construction, fitting, selection and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid needs at least 3 points, got {len}")]
    GridTooSmall { len: usize },

    #[error("time grid must be strictly increasing (violation at index {index})")]
    NonIncreasingGrid { index: usize },

    #[error("symmetric eigendecomposition of the penalty matrix did not converge")]
    EigenFailure,

    #[error("smoothing parameter must be nonnegative, got {alpha}")]
    NegativeAlpha { alpha: f64 },

    #[error("leave-one-column oracle requires alpha > 0, got {alpha}")]
    AlphaNotPositive { alpha: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("data matrix is identically zero; component undefined")]
    ZeroMatrix,

    #[error("initial loading lies in the null space of the data matrix")]
    DegenerateInitialization,

    #[error("score vector u is zero; CV/GCV scores undefined")]
    ZeroScores,

    #[error("smoother leverage saturated at column {index} (1 - S_jj <= 1e-12)")]
    DegenerateLeverage { index: usize },

    #[error("reduced ridge system singular when deleting column {column}")]
    SingularReducedSystem { column: usize },

    #[error("alpha grid is empty")]
    EmptyAlphaGrid,

    #[error("invalid alpha grid: {0}")]
    InvalidAlphaGrid(String),

    #[error("criterion failed at every alpha grid point")]
    AllScoresFailed,

    #[error("need at least 2 rows to center columns, got {rows}")]
    TooFewRows { rows: usize },

    #[error("requested {requested} components but at most {max} are identifiable")]
    TooManyComponents { requested: usize, max: usize },

    #[error("penalty operator was built on a different time grid")]
    GridMismatch,

    #[error("count matrix has a negative entry {value} at row {row}, column {col}")]
    NegativeCount { row: usize, col: usize, value: f64 },

    #[error("sign test undefined: all differences are zero")]
    AllZeroDiffs,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} simulation replicates failed (more than 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: expected {expected} columns, found {got}")]
    RaggedRow { line: usize, expected: usize, got: usize },

    #[error("line {line}, column {col}: cell is not a number")]
    NonNumericCell { line: usize, col: usize },

    #[error("grid has {grid} points but matrix has {cols} columns")]
    GridLengthMismatch { grid: usize, cols: usize },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported result format version {found} (expected {expected})")]
    UnsupportedFormatVersion { found: u32, expected: u32 },

    #[error("unknown component index {index}; result has {available} components")]
    UnknownComponent { index: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
