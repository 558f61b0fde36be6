use thiserror::Error;

/// Error taxonomy shared across the engine.
#[derive(Debug, Error)]
pub enum SgrError {
    /// Shape or extent disagreement between operands.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Axis or index outside the valid range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN/Inf or other numeric breakdown.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Invalid or inconsistent dataset content.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file content; carries location where known.
    #[error("parse error: {0}")]
    Parse(String),

    /// File carries an unsupported format version.
    #[error("version mismatch: {0}")]
    Version(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SgrError>;

impl SgrError {
    /// Process exit code for CLI consumers: 2 usage, 3 data/validation, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            SgrError::Config(_) | SgrError::Contract(_) => 2,
            SgrError::Numeric(_) => 4,
            _ => 3,
        }
    }
}
