use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by constructors, transforms, and the solver.
#[derive(Debug, Error)]
pub enum Error {
    /// An entry was outside the domain of the requested transform
    /// (e.g. a non-positive proportion passed to a logarithm).
    #[error("entry at row {row}, column {col} is out of domain: {reason}")]
    Domain { row: usize, col: usize, reason: String },

    /// Matrix shapes do not line up.
    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {found_rows}x{found_cols}")]
    Dimension {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    /// A structural invariant failed (row sums, orthonormality, ...).
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A configuration value is outside its legal range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Numerical linear algebra failed (e.g. SVD did not converge).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The solver hit a non-finite value mid-iteration; carries the progress
    /// made up to that point for diagnosis.
    #[error("numeric failure during solve: {message}")]
    SolverNumeric { message: String, trace: Box<crate::solver::SolveTrace> },

    /// Auto-tuning aborted because an inner solve failed; carries the rounds
    /// evaluated so far.
    #[error("auto-tuning aborted: {source}")]
    TuneAborted {
        #[source]
        source: Box<Error>,
        trace: Box<crate::autotune::TuneTrace>,
    },
}

impl Error {
    pub(crate) fn domain(row: usize, col: usize, reason: impl Into<String>) -> Self {
        Error::Domain { row, col, reason: reason.into() }
    }

    pub(crate) fn dims(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Dimension {
            expected_rows: expected.0,
            expected_cols: expected.1,
            found_rows: found.0,
            found_cols: found.1,
        }
    }
}
