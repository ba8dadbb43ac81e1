use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// The instance cannot be stabilized even with every node fully vaccinated.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    /// Cut budget exhausted. Carries the best verified-feasible point and
    /// the relative gap to the relaxation bound at that point.
    #[error("cutting plane did not converge after {cuts} cuts (relative gap {gap:e})")]
    NotConverged {
        cuts: usize,
        gap: f64,
        best_gamma: Vec<f64>,
    },

    #[error("refusing {what}: n = {n} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
