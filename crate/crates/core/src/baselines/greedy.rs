use super::QModel;
use crate::error::{Error, Result};
use crate::mdp::Trajectory;
use crate::nn::Matrix;
use crate::policy::{epsilon_greedy, History, Policy, PolicyKind};
use crate::scalar::Scalar;

/// ε-soft greedy policy over a Q-network.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<S> {
    pub q: QModel<S>,
    pub epsilon: f64,
}

pub fn greedy_policy<S: Scalar>(q: QModel<S>, epsilon: f64) -> Result<GreedyPolicy<S>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(GreedyPolicy { q, epsilon })
}

impl<S: Scalar> Policy<S> for GreedyPolicy<S> {
    fn num_actions(&self) -> usize {
        self.q.num_actions()
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::GreedyQ
    }

    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        epsilon_greedy(&self.q.q_values(history.current_state()), self.epsilon)
    }

    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        let rows: Vec<&[S]> = traj.transitions.iter().map(|t| t.state.as_slice()).collect();
        let q = self
            .q
            .net
            .forward(&Matrix::from_rows(&rows).expect("uniform state width"))
            .expect("state width matches network");
        q.iter_rows().map(|row| epsilon_greedy(row, self.epsilon)).collect()
    }
}
