use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel has zero mean excess at y = {location}, so mu is undefined there")]
    DegenerateKernelAtAtom { location: f64 },
    #[error("integrand is not finite at y = {location}")]
    NonFiniteIntegrand { location: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("{what} jump intensity is not finite")]
    InfiniteJumpIntensity { what: &'static str },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("state {state} exceeded the explosion ceiling {ceiling}")]
    StateExplosion { state: u64, ceiling: u64 },
    #[error("half-sample occupation estimates differ by {tv:.4} in total variation (threshold {threshold})")]
    NonConvergence { tv: f64, threshold: f64 },
    #[error("invalid scaling at N = {n}: {reason}")]
    InvalidScaling { n: usize, reason: String },
    #[error("classification requires sigma = 0, got {0}")]
    SigmaNotZero(f64),
    #[error("regime mismatch: expected {expected}, classified as {found}")]
    RegimeMismatch { expected: &'static str, found: &'static str },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
