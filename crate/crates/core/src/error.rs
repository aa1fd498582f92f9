use thiserror::Error;

/// Errors produced by the accountant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid crop configuration: {0}")]
    InvalidConfig(String),

    #[error("patch too large: {0}")]
    PatchTooLarge(String),

    #[error("patch placement outside the original image: {0}")]
    PlacementOutOfBounds(String),

    #[error("mask has no set pixels")]
    EmptyMask,

    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration domain too large: {origins} origins exceeds limit {limit}")]
    TooLargeDomain { origins: u64, limit: u64 },

    #[error("quadrature did not converge: estimated error {error:e} exceeds tolerance {tol:e}")]
    QuadratureNonconvergence { error: f64, tol: f64 },

    #[error("privacy curve is not monotone near epsilon = {epsilon}: delta rises by {increase:e}")]
    NonMonotoneCurve { epsilon: f64, increase: f64 },

    #[error("privacy loss grid needs {len} points, more than the configured maximum {max}")]
    GridOverflow { len: usize, max: usize },

    #[error("delta = {delta:e} is unattainable: mass at infinity is {infinity_mass:e}")]
    UnattainableDelta { delta: f64, infinity_mass: f64 },

    #[error("no noise multiplier up to {sigma_max} reaches target epsilon {target}")]
    BracketFailure { target: f64, sigma_max: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value })
    }
}
