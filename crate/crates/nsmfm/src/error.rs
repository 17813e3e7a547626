//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input contains NaN/Inf entries or violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The iterative eigensolver did not converge.
    #[error("eigensolver failed to converge within {iterations} iterations")]
    NumericalFailure { iterations: usize },

    /// A requested rank exceeds what the matrix dimensions allow.
    #[error("requested rank {requested} exceeds limit {limit}")]
    RankTooLarge { requested: usize, limit: usize },

    /// The Gram matrix L'L of a loadings matrix is numerically singular.
    #[error("singular Gram matrix (condition number {cond:.3e})")]
    SingularGram { cond: f64 },

    /// A matrix expected to have full column rank does not.
    #[error("rank-deficient input: {0}")]
    SingularInput(String),

    /// Matrix dimensions do not conform.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// A simulation or selection configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The anti-projection Gram blocks are singular, i.e. the orthogonal
    /// complement of the trend loadings also annihilates the stationary
    /// loadings.
    #[error("degenerate anti-projection in {stage}: {detail}")]
    DegenerateAntiProjection { stage: &'static str, detail: String },

    /// A pipeline stage failed; carries the stage name for diagnostics.
    #[error("estimation stage '{stage}' failed: {source}")]
    StageFailure {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// Malformed text input (CSV or key=value metadata).
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    /// An aggregation query referenced an unknown metric.
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::StageFailure {
            stage,
            source: Box::new(self),
        }
    }
}
