use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient resolution near origin: {0}")]
    InsufficientResolution(String),

    #[error("scale coordinate degenerate: ξ(0+) diverges (classical noise)")]
    ScaleDegenerate,

    #[error("clock stall at wiener time {wiener_time:.3e}, flow time {flow_time:.3e}")]
    ClockStall { wiener_time: f64, flow_time: f64 },

    #[error("correlation matrix not positive-definite at configuration {0:?}")]
    NotPositiveDefinite(Vec<f64>),

    #[error("empty sample")]
    EmptySample,

    #[error("too few nonempty samples: {got} < {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("ill-conditioned fit (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("grid/horizon mismatch: mass {mass:.3e} reaches the far boundary")]
    GridHorizon { mass: f64 },

    #[error("decay not reached: ξ_max = {xi_max} too small for λ = {lambda}")]
    DecayNotReached { lambda: f64, xi_max: f64 },
}

impl Error {
    /// Numerical failures (as opposed to rejected inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ClockStall { .. }
                | Error::NotPositiveDefinite(_)
                | Error::IllConditioned { .. }
                | Error::GridHorizon { .. }
                | Error::DecayNotReached { .. }
                | Error::TooFewSamples { .. }
                | Error::EmptySample
        )
    }
}
