use thiserror::Error;

/// Errors raised by the library surface.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain the operation is defined on.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The moderate-deviation operations need `b·g'(x*) < -1`.
    #[error("b·g'(x*) = {exponent} must be < -1")]
    NotMdpRegime { exponent: f64 },

    /// No admissible δ could be found within the probed horizon.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The operation is only defined for another noise model.
    #[error("unsupported noise model: {0}")]
    UnsupportedNoise(String),

    /// A trajectory does not carry the recorded path the operation needs.
    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
