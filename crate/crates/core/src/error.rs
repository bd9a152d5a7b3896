use thiserror::Error;

use crate::grid::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel is not finite at y = {y:?}")]
    KernelSingularity { y: Point },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("precondition violated: {message} ({} locations)", locations.len())]
    Precondition { message: String, locations: Vec<Point> },

    #[error("stiffness error: pseudo-time step {dt:e} underflows")]
    Stiffness { dt: f64 },

    #[error("scheme is not monotone: {0}")]
    NonMonotone(String),

    #[error("barrier failure: {0}")]
    Barrier(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
