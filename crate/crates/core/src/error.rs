use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field is tagged {found}, expected {expected}")]
    WrongSpace { expected: &'static str, found: &'static str },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cost guard: {0}")]
    CostGuard(String),
    #[error("boundary mass {mass:.3e} exceeds {limit:.1e} at t = {t}")]
    BoundaryMass { t: f64, mass: f64, limit: f64 },
    #[error("non-finite values at step {step}, t = {t}")]
    NonFinite { t: f64, step: u64 },
    #[error("config error{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BoundaryMass { .. } => 2,
            Error::Config { .. } => 3,
            Error::NonFinite { .. } | Error::InsufficientData(_) => 4,
            _ => 1,
        }
    }
}
