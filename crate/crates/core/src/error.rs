use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "unstable intensity: beta = {beta} must be strictly below xi = {xi} (branching ratio < 1)"
    )]
    Unstable { beta: f64, xi: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("integrator failed at t = {t}: {reason}")]
    Solver { t: f64, reason: String },

    #[error("gain undefined: benchmark value {0} is not positive")]
    UndefinedGain(f64),

    #[error("configuration mismatch: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
