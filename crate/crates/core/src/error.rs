use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or experiment parameter is outside its documented range.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// A call-site argument (observation sequence, cell index, table) is malformed.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An iterative estimate failed to converge.
    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("degenerate point density: {0}")]
    DegenerateDensity(String),

    #[error("ambiguous quantizer boundary {index}: density vanishes on an interval at mass level {level}")]
    AmbiguousBoundary { index: usize, level: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("threshold calibration failed: {0}")]
    Calibration(String),

    #[error("malformed document: {0}")]
    Decode(String),

    #[error("worker pool: {0}")]
    Pool(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
