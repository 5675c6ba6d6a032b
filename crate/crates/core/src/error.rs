use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes. The CLI maps these onto its exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: `{field}` is out of range ({value})")]
    Domain { field: &'static str, value: f64 },

    #[error("loan {loan_id}: {reason}")]
    InvalidRecord { loan_id: u64, reason: String },

    #[error("loan {loan_id} is still in an intermediate repayment state")]
    RejectedRecord { loan_id: u64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("unknown loan id {0}")]
    Lookup(u64),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {what}: line {line}: {reason}")]
    Format {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Io { .. } => ErrorClass::Io,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }
}
