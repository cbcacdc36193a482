/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Derived sketch widths would exceed the configured memory cap.
    #[error("parameters infeasible: {0}")]
    Infeasible(String),
    /// A norm whose mmc bound exceeds the M the release was calibrated for.
    #[error("release not calibrated for this norm: mmc bound {mmc} exceeds M {cap}")]
    NotCalibrated { mmc: f64, cap: f64 },
    #[error("mmc unknown, supply M manually")]
    MmcUnknown,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 3,
            Error::NotCalibrated { .. } => 4,
            Error::Usage(_) | Error::Parse(_) | Error::InvalidParameter(_) => 2,
            _ => 2,
        }
    }
}
