use thiserror::Error;

/// Errors raised across the model, control, signal and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("arc length {s} outside [0, {length}]")]
    ArcLengthOutOfRange { s: f64, length: f64 },

    #[error("pose is not invertible: {0}")]
    NotInvertible(String),

    #[error("task-space inertia is singular (kinematic singularity)")]
    SingularTaskInertia,

    #[error("actuation angle {value} outside [0, {phi_max}]")]
    ActuationOutOfBounds { value: f64, phi_max: f64 },

    #[error("singular covariance; use a shrinkage factor gamma > 0")]
    SingularCovariance,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("baseline power is zero for channel {channel}, bin {bin}")]
    ZeroBaseline { channel: usize, bin: usize },

    #[error("integration failure at t = {t:.4} s: {reason}")]
    Integration { t: f64, reason: String },

    #[error("controller failure at t = {t:.4} s: {source}")]
    Controller { t: f64, source: Box<Error> },

    #[error("schedule and log do not match: {0}")]
    ScheduleMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
