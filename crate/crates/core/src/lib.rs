//! Preference-based reward learning for a discretized landing MDP.
//!
//! The crate is `no_std` with `alloc`. Everything that touches the file
//! system, the clock, or the network lives in the `uam-prefs` harness crate.
//!
//! Layout:
//!
//! * [`mdp`]: finite deterministic MDPs, value iteration, greedy and softmax
//!   policies, rollouts.
//! * [`landing`]: the landing model (state and action grids, kinematics,
//!   reward features, trajectory-set reward).
//! * [`posterior`]: sigmoid preference likelihood, log posterior on the
//!   weight simplex, adaptive Metropolis sampling.
//! * [`query`]: Gaussian KDE and the two query selectors.
//! * [`iteration`]: the reward-iteration loop, the simulated expert and the
//!   evaluation metrics.
#![no_std]

extern crate alloc;

pub mod error;
pub mod iteration;
pub mod landing;
pub mod math;
pub mod mdp;
pub mod posterior;
pub mod query;
pub mod weights;

pub use error::{Error, Result};
pub use weights::RewardWeights;
