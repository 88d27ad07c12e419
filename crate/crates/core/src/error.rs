use thiserror::Error;

/// Failure modes shared by every pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("window mismatch: field starts at {field} with {field_len} sites, coefficients start at {coeffs} with {coeffs_len} sites")]
    WindowMismatch {
        field: i64,
        field_len: usize,
        coeffs: i64,
        coeffs_len: usize,
    },
    #[error("left-boundary mass {mass:.3e} exceeds tolerance {tol:.1e}; prefix sums are truncated")]
    Truncation { mass: f64, tol: f64 },
    #[error("integration diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("profile solver failed at c = {c}: {detail}")]
    Solver { c: f64, detail: String },
    #[error("consistency failure: {0}")]
    Consistency(String),
    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    FitFailure { iterations: usize, residual: f64 },
    #[error("coherence lost: {0}")]
    CoherenceLost(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Solver,
    Coherence,
    Convergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::InvalidWindow(_) | Error::WindowMismatch { .. } => {
                ErrorClass::Config
            }
            Error::CoherenceLost(_) => ErrorClass::Coherence,
            Error::Convergence(_) | Error::FitFailure { .. } => ErrorClass::Convergence,
            Error::Truncation { .. }
            | Error::Diverged { .. }
            | Error::Solver { .. }
            | Error::Consistency(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorClass::Solver,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
