use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// `∫(e^{y·z}-1-y·z) K(dz)` does not converge at the requested argument.
    #[error("jump integral diverges: Re(y·d) = {re_yd} >= rate {rate}")]
    DivergentIntegral { re_yd: f64, rate: f64 },

    #[error("unsupported state space: {0}")]
    UnsupportedSpace(String),

    #[error("unsupported jump family: {0}")]
    UnsupportedFamily(String),

    #[error("point is not in the state space (margin {margin:e})")]
    StateSpaceMismatch { margin: f64 },

    #[error("step limit of {0} exceeded")]
    StepLimitExceeded(usize),

    #[error("right-hand side is not finite at t = {t}")]
    NonFiniteRhs { t: f64 },

    #[error("Riccati solution exploded at t in [{t_lo}, {t_hi}] before the requested horizon {horizon}")]
    ExplosionBeforeHorizon { t_lo: f64, t_hi: f64, horizon: f64 },

    #[error("jump intensity is not finite")]
    IntensityInfinite,

    #[error("diffusion matrix has eigenvalue {0:e} below the clipping tolerance")]
    CholeskyFailure(f64),

    #[error("model file: {0}")]
    Schema(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
