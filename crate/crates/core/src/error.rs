use thiserror::Error;

/// Errors produced anywhere in the model, solvers and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid vehicle properties: {0}")]
    InvalidProperties(String),
    #[error("calibration failed:\n{0}")]
    CalibrationFailed(String),
    #[error("integration diverged at t = {time:.4} s")]
    IntegrationDiverged { time: f64 },
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("control allocation failed: {0}")]
    Allocation(String),
    #[error("controller error: {0}")]
    Controller(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
