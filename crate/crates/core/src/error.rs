use thiserror::Error;

/// Errors raised by the localization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate channel at receiver {receiver}: gain magnitude is zero")]
    DegenerateChannel { receiver: usize },

    /// A correlation input carried no energy.
    #[error("degenerate signal{}: zero energy", match .receiver { Some(r) => format!(" at receiver {r}"), None => String::new() })]
    DegenerateSignal { receiver: Option<usize> },

    #[error("invalid covariance: {0}")]
    Covariance(String),

    #[error("position {position:?} is within the guard radius of receiver {receiver}")]
    Singularity { receiver: usize, position: [f64; 2] },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
