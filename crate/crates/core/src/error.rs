use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("value iteration did not converge within {sweeps} sweeps (last delta {delta})")]
    NotConverged { sweeps: usize, delta: f64 },

    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),

    #[error("weights ({alpha}, {beta}, {gamma}) are not on the open simplex")]
    OffSimplex { alpha: f64, beta: f64, gamma: f64 },

    #[error("trajectory set is empty")]
    EmptyTrajectorySet,

    #[error("rollout from initial state {initial_state} did not land (weights {weights:?})")]
    RolloutDidNotLand {
        initial_state: usize,
        weights: [f64; 3],
    },

    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("no pair of distinct samples to build a query from")]
    NoDistinctPair,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
