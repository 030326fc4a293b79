//! Error type shared across the library.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A design column has zero Euclidean norm and cannot be normalized.
    /// `column` is 1-based, matching the column numbering in reports.
    #[error("column {column} has zero norm and cannot be normalized")]
    ZeroNormColumn { column: usize },

    /// A non-finite value (NaN or infinity) was found where a real number is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for {context} of size {size}")]
    IndexOutOfRange {
        index: usize,
        size: usize,
        context: String,
    },

    #[error("matrix is not symmetric: |A[{row},{col}] - A[{col},{row}]| = {deviation:e}")]
    NotSymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },

    /// Power iteration hit its iteration cap before the estimate settled.
    #[error("power iteration did not converge within {iterations} iterations (last estimate {last_estimate})")]
    PowerIterationNoConvergence {
        iterations: usize,
        last_estimate: f64,
    },

    /// Cholesky factorization hit a non-positive pivot. Carries the matrix
    /// diagnostics needed to reproduce the failure.
    #[error("symmetric factorization failed at row {row}: pivot {pivot:e} (dim {dim}, ridge {ridge:e})")]
    FactorizationFailure {
        row: usize,
        pivot: f64,
        dim: usize,
        ridge: f64,
    },

    /// Conjugate gradients stopped above the requested gradient norm.
    #[error("quadratic solve did not converge: final gradient norm {gradient_norm:e} after {iterations} iterations")]
    SolveNoConvergence {
        gradient_norm: f64,
        iterations: usize,
    },

    #[error("design matrix must be column-normalized before fitting")]
    NotNormalized,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The response is orthogonal to every design column, so no penalty grid exists.
    #[error("X^T y is identically zero: response is orthogonal to all columns")]
    DegenerateGrid,

    #[error("grid values must be strictly decreasing and positive: {0}")]
    InvalidGrid(String),

    #[error("no estimator registered under name {0:?}")]
    UnknownEstimator(String),

    /// A bad cell in an input table. Coordinates are 1-based, header row excluded.
    #[error("bad value at row {row}, column {column} of {path}: {reason}")]
    CsvCell {
        path: String,
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("config file {path}, line {line}: {reason}")]
    Config {
        path: String,
        line: usize,
        reason: String,
    },
}

impl Error {
    /// True for errors caused by reading or writing files (CLI exit code 3).
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Csv { .. } | Error::CsvCell { .. }
        )
    }
}
