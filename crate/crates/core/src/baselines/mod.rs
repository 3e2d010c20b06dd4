//! Scalarized single-objective offline learners: behavior cloning, double
//! DQN and conservative Q-learning. Q-learners are trained on
//! `scalarize(r, ω)` at one fixed preference, `[0.5, 0.5]` by default.

mod bc;
mod greedy;
mod qlearn;

pub use bc::{train_bc, BcConfig, BcReport, SoftmaxPolicy};
pub use greedy::{greedy_policy, GreedyPolicy};
pub use qlearn::{
    cql_penalty, double_q_targets, train_cql, train_ddqn, QLearningConfig, QModel, QTrainReport,
};

use rand::Rng;

/// Default ε used to make greedy policies stochastic before importance
/// sampling.
pub const OPE_EPSILON: f64 = 0.05;

pub(crate) fn sample_indices<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}
