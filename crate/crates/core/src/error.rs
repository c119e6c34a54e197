use thiserror::Error;

/// Errors raised by the regularization library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies outside the domain ball: distance {distance} > radius {radius}")]
    DomainViolation { distance: f64, radius: f64 },

    #[error("singular or indefinite normal system")]
    SingularSystem,

    /// The distance to the benchmark source set vanishes, so the fixed
    /// radius branch applies instead of the balancing equation.
    #[error("distance function vanishes identically; use the fixed radius {fixed_radius}")]
    VanishingDistance { fixed_radius: f64 },

    #[error("regime hypotheses violated: {0}")]
    RegimeViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")))
    }
}
