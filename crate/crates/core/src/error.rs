use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel family `{0}` has no spectral sampler")]
    UnsupportedFamily(&'static str),

    #[error("environment is in {actual} mode, operation requires {required} mode")]
    WrongMode {
        required: &'static str,
        actual: &'static str,
    },

    #[error("step {step} out of range for an environment with {n_steps} steps")]
    StepOutOfRange { step: usize, n_steps: usize },

    #[error("cholesky factorization failed with jitter up to {jitter:e}")]
    CholeskyFailed { jitter: f64 },

    #[error("grid mismatch: paths have ({path_steps} steps, dt={path_dt}), environment has ({env_steps} steps, dt={env_dt})")]
    GridMismatch {
        path_steps: usize,
        path_dt: f64,
        env_steps: usize,
        env_dt: f64,
    },

    #[error("all Gibbs pair weights underflowed at grid index {0}")]
    WeightUnderflow(usize),

    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    QuadratureFailed { a: f64, b: f64, error: f64 },

    #[error("radial profile is not nonincreasing near r = {0}")]
    NonMonotoneProfile(f64),

    #[error("time {0} is not a point of the simulation grid")]
    NotOnGrid(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
