use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// The variants follow the failure classes callers need to distinguish:
/// malformed input (`Dimension`, `Spec`, `Schema`), numerical breakdown
/// (`Numeric`, `WeakInstrument`, `LinearAlgebra`, `Training`) and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("weak instrument: {0}")]
    WeakInstrument(String),

    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::Spec(_) => "spec",
            Error::Domain(_) => "domain",
            Error::WeakInstrument(_) => "weak_instrument",
            Error::LinearAlgebra(_) => "linear_algebra",
            Error::Training { .. } => "training",
            Error::Schema(_) => "schema",
            Error::Replication { .. } => "replication",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for failures caused by bad input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_) | Error::Spec(_) | Error::Schema(_) | Error::Json(_) | Error::Domain(_)
        )
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }
}
