use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the sampled hull [{lo}, {hi}]")]
    OutOfDomain { point: [f64; 2], lo: f64, hi: f64 },

    #[error("tolerance not met: estimate {estimate:e}, error bound {error:e} > requested {requested:e}")]
    ToleranceNotMet {
        estimate: f64,
        error: f64,
        requested: f64,
    },

    #[error("invalid weight specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// Best available estimate carried by a tolerance failure.
    pub fn best_estimate(&self) -> Option<f64> {
        match self {
            Error::ToleranceNotMet { estimate, .. } => Some(*estimate),
            _ => None,
        }
    }
}
