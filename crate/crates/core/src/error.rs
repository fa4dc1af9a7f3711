use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("noise model on axis {axis} has no sampler")]
    SamplerUnavailable { axis: usize },

    #[error("density has no positive mass on the grid")]
    NonpositiveDensity,

    #[error("need at least {needed} points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("malformed sample file at line {line}: {message}")]
    MalformedSample { line: u64, message: String },

    #[error("oracle risk unstable: resolution drift {drift:e} exceeds 10% of smallest mean excess risk {floor:e}")]
    OracleUnstable { drift: f64, floor: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EmptySample => "empty-sample",
            Error::SamplerUnavailable { .. } => "sampler-unavailable",
            Error::NonpositiveDensity => "nonpositive-density",
            Error::InsufficientPoints { .. } => "insufficient-points",
            Error::MalformedSample { .. } => "malformed-sample",
            Error::OracleUnstable { .. } => "oracle-unstable",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
