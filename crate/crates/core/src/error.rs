use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid topology mismatch: kernel on {kernel}, density on {density}")]
    TopologyMismatch {
        kernel: &'static str,
        density: &'static str,
    },

    #[error("law `{0}` has no exact sampler")]
    NoSampler(String),

    #[error("non-finite particle state at t = {time} (step size too large?)")]
    NonFiniteState { time: f64 },

    #[error("CFL guard violated: {0}")]
    Cfl(String),

    #[error("clamped negative mass {clamped:e} exceeds {limit:e}")]
    ClampedMass { clamped: f64, limit: f64 },

    #[error("velocity tail mass {tail:e} exceeds {limit:e}: v_max too small")]
    TailMass { tail: f64, limit: f64 },

    #[error("relative entropy undefined: f_tilde = {value:e} where f = 0")]
    NotAbsolutelyContinuous { value: f64 },

    #[error("outside theorem regime: a = {0} must satisfy 0 <= a < 1")]
    OutsideRegime(f64),

    #[error("enumeration of {size} tuples exceeds the guard of {limit}")]
    EnumerationGuard { size: u128, limit: u128 },

    #[error("index tuple is not effective (some symbol has multiplicity one)")]
    NotEffective,

    #[error("quadrature needs |A| <= {limit} active particles, got {active}")]
    TooManyActive { active: usize, limit: usize },

    #[error("non-finite integrand")]
    NonFiniteIntegrand,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
