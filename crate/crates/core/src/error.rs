use alloc::string::String;

/// Errors raised by the navigation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Two grids or vectors that must agree in shape do not.
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    /// An event lies outside the sensor.
    #[error("event at ({x}, {y}) lies outside a {width}x{height} sensor")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: usize,
        height: usize,
    },
    /// Not enough distinct samples to fit the requested model.
    #[error("underdetermined fit: need {needed} distinct velocities, got {got}")]
    Underdetermined { needed: usize, got: usize },
    /// Inconsistent or missing configuration (e.g. no polynomial for a depth).
    #[error("configuration error: {0}")]
    Config(String),
    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
