use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown node index {node} (m = {m})")]
    UnknownNode { node: usize, m: usize },

    /// A rule- or run-level constraint on `(m, q, ...)` does not hold.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// A closed-form quantity evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the `brsgd` binary.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Constraint(_) | Error::Domain(_) => 3,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
            Error::ScheduleMismatch(_) => 5,
            _ => 1,
        }
    }
}
