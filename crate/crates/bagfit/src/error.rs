//! Crate-wide error type and result alias.
//!
//! Every fallible operation in this crate returns [`Result`]. The variants
//! are grouped by the subsystem that raises them; higher layers wrap lower
//! ones only where extra context is genuinely useful (e.g. which subsample
//! failed and after how many attempts).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors this crate can produce.
#[derive(Debug, Error)]
pub enum Error {
    // ----- linear algebra -----
    /// A matrix handed to the Cholesky solver was singular (or not positive
    /// definite enough to factor at the configured pivot threshold).
    #[error("singular matrix: pivot {pivot:.6e} at column {col} is below the positivity threshold")]
    SingularMatrix { col: usize, pivot: f64 },

    // ----- row store -----
    /// An underlying I/O operation failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// The store file's fixed header could not be validated.
    #[error("corrupt store header: {reason}")]
    CorruptHeader { reason: String },

    /// The store file is shorter than its header claims.
    #[error("truncated store file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    /// The schema digest in the file does not match the sidecar schema.
    #[error("schema mismatch: header digest {actual:#018x} does not match schema digest {expected:#018x}")]
    SchemaMismatch { expected: u64, actual: u64 },

    /// A row index was at or beyond the number of rows in the store.
    #[error("row index {index} out of range for store of {len} rows")]
    IndexOutOfRange { index: u64, len: u64 },

    // ----- loss models -----
    /// A loss evaluation produced a non-finite value (overflow or NaN).
    #[error("non-finite loss value: {detail}")]
    NonFiniteLoss { detail: String },

    /// A gradient or Hessian entry was non-finite.
    #[error("non-finite value in {context}")]
    NonFiniteValue { context: String },

    // ----- solver -----
    /// The Hessian was singular at some Newton iteration, or the iterates
    /// are provably diverging (e.g. a logistic fit on separable data).
    #[error("singular or divergent Hessian at iteration {iteration}")]
    SingularHessian { iteration: usize },

    /// Newton iteration failed to reach the gradient tolerance.
    #[error("maximum iterations ({max_iter}) exceeded; gradient norm {grad_norm:.6e}")]
    MaxIterExceeded { max_iter: usize, grad_norm: f64 },

    // ----- bagging -----
    /// One subsample fit failed even after the configured number of
    /// fresh-draw retries.
    #[error("subsample {subsample} failed after {attempts} attempt(s): {source}")]
    SubsampleFitFailed {
        subsample: usize,
        attempts: usize,
        #[source]
        source: Box<Error>,
    },

    /// A quantity was requested that is undefined for the given inputs
    /// (e.g. a spread-based variance from a single subsample).
    #[error("degenerate input: {detail}")]
    Degenerate { detail: String },

    /// A Wald p-value was requested for a coordinate whose standard error
    /// is exactly zero while the estimate is not.
    #[error("zero standard error for coordinate {coordinate} with nonzero estimate")]
    ZeroSe { coordinate: usize },

    // ----- configuration / ingest -----
    /// Invalid user-supplied configuration or arguments.
    #[error("invalid input: {detail}")]
    InvalidInput { detail: String },

    /// A categorical field contained a level not present in the declared
    /// level set.
    #[error("unknown level {level:?} in column {column:?} at data row {row}")]
    UnknownLevel {
        column: String,
        level: String,
        row: u64,
    },

    /// A numeric field failed to parse.
    #[error("non-numeric value {value:?} in column {column:?} at data row {row}")]
    NonNumericValue {
        column: String,
        value: String,
        row: u64,
    },

    /// A row had the wrong number of fields.
    #[error("ragged row {row}: expected {expected} fields, found {actual}")]
    RaggedRow {
        row: u64,
        expected: usize,
        actual: usize,
    },

    /// The input contained no data rows.
    #[error("input contains no data rows")]
    EmptyInput,

    /// A numeric column was constant, so it cannot be standardized.
    #[error("column {column:?} has zero variance and cannot be standardized")]
    ZeroVariance { column: String },
}

impl Error {
    /// Shorthand for [`Error::InvalidInput`].
    pub fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidInput {
            detail: detail.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::invalid(format!("malformed csv: {other:?}")),
        }
    }
}
