use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("grid too short: table covers t <= {covered}, requested {requested}")]
    GridTooShort { covered: f64, requested: f64 },
    #[error("time {0} is not on the table grid")]
    OffGrid(f64),
    #[error("frequency {0} is not in the table")]
    FrequencyNotInTable(f64),
    #[error("quadrature did not converge: estimated error {error:e} after {evaluations} evaluations")]
    QuadratureFailed { error: f64, evaluations: usize },
    #[error("propagation produced a non-finite state at step {0}")]
    NonFinite(usize),
    #[error("TCL generator singular at t = {t}: condition number {condition:e}")]
    SingularGenerator { t: f64, condition: f64 },
    #[error("Fock truncation not converged: one more level moves the trajectory by {deviation:e}")]
    TruncationNotConverged { deviation: f64 },
    #[error("ratio undefined: {0}")]
    RatioUndefined(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
