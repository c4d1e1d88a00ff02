//! Passing probability of an adversary that relies on some unrelated
//! vehicle happening to follow the verifier.

pub mod analysis;
pub mod matrix;
pub mod monte_carlo;
pub mod schedule;

use thiserror::Error;

pub use analysis::{
    deadline_to_steps, exact_passing_probability, exact_passing_probability_with, guess_bound, passing_probability,
    steady_state_approx, AttackConfig, RandomWalkModel,
};
pub use matrix::{build_transition_matrix, n_step_matrix, TransitionMatrix};
pub use monte_carlo::{simulate_random_walk_follower, uniform_draws, MonteCarloEstimate, WalkSampler};
pub use schedule::ScheduleOracle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecurityError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{n} states exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },
}
