use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two broad families the CLI maps onto exit codes:
/// input/validation problems (bad files, bad flags, empty inputs) and
/// numerical problems (non-convergence, degenerate data, singular systems).
#[derive(Debug, Error)]
pub enum Error {
    #[error("series did not converge within {max_terms} terms (tail bound {bound:.3e})")]
    NonConvergentSeries { max_terms: u64, bound: f64 },

    #[error("non-identifiable: {0}")]
    NonIdentifiable(String),

    #[error("boundary solution: {0}")]
    BoundarySolution(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    #[error("division undefined: {0}")]
    DivisionUndefined(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),

    #[error("empty routing table")]
    EmptyTable,

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("invalid sampling fraction p={0} (need 0 < p < 1)")]
    InvalidSamplingFraction(f64),

    #[error("all replicates failed: {0}")]
    AllReplicatesFailed(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// An I/O failure annotated with the path it happened on.
    pub fn reading(path: &std::path::Path, e: std::io::Error) -> Error {
        Error::InvalidInput(format!("{}: {e}", path.display()))
    }

    /// True for errors that arise from the numerics of an estimator
    /// (as opposed to malformed input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergentSeries { .. }
                | Error::NonIdentifiable(_)
                | Error::BoundarySolution(_)
                | Error::NonConvergence(_)
                | Error::SingularInformation(_)
                | Error::DivisionUndefined(_)
                | Error::InsufficientData(_)
                | Error::SingularDesign(_)
                | Error::NumericalUnderflow(_)
                | Error::AllReplicatesFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
