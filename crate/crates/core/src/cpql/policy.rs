use std::sync::Arc;

use super::VectorQModel;
use crate::error::{Error, Result};
use crate::mdp::{PreferenceVector, Trajectory};
use crate::nn::Matrix;
use crate::policy::{epsilon_greedy, History, Policy, PolicyKind};
use crate::scalar::Scalar;

/// ε-soft greedy policy over `ωᵀQ(s, ·; ω)` at one preference.
#[derive(Debug, Clone)]
pub struct ConditionedQPolicy<S> {
    pub model: Arc<VectorQModel<S>>,
    pub preference: PreferenceVector,
    pub epsilon: f64,
}

pub fn policy_at<S: Scalar>(
    model: Arc<VectorQModel<S>>,
    preference: PreferenceVector,
    epsilon: f64,
) -> Result<ConditionedQPolicy<S>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok(ConditionedQPolicy { model, preference, epsilon })
}

impl<S: Scalar> ConditionedQPolicy<S> {
    /// Scalarized per-action values at `state`.
    pub fn values(&self, state: &[S]) -> Vec<S> {
        let q = self.model.q_vectors(state, &self.preference);
        self.model.scalarized(&q, &self.model.objective_weights(&self.preference))
    }
}

impl<S: Scalar> Policy<S> for ConditionedQPolicy<S> {
    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Conditioned
    }

    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        epsilon_greedy(&self.values(history.current_state()), self.epsilon)
    }

    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        let rows: Vec<&[S]> = traj.transitions.iter().map(|t| t.state.as_slice()).collect();
        let states = Matrix::from_rows(&rows).expect("uniform state width");
        let prefs = vec![self.preference; rows.len()];
        let q = self.model.forward(&states, &prefs).expect("state width matches network");
        let weights = self.model.objective_weights(&self.preference);
        q.iter_rows()
            .map(|row| epsilon_greedy(&self.model.scalarized(row, &weights), self.epsilon))
            .collect()
    }
}
