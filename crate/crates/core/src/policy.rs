//! Stochastic discrete-action policies, optionally history-dependent.

use serde::{Deserialize, Serialize};

use crate::mdp::{Trajectory, VectorReward};
use crate::nn::loss::argmax;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Bc,
    GreedyQ,
    Conditioned,
    Behavior,
    Uniform,
}

/// Observed prefix of an episode: states `s_1..s_t` and the actions and
/// rewards of steps `1..t-1`. The last state is the one being acted on.
#[derive(Debug, Clone, Copy)]
pub struct History<'a, S> {
    pub states: &'a [Vec<S>],
    pub actions: &'a [usize],
    pub rewards: &'a [VectorReward<S>],
}

impl<'a, S> History<'a, S> {
    pub fn new(states: &'a [Vec<S>], actions: &'a [usize], rewards: &'a [VectorReward<S>]) -> Self {
        debug_assert_eq!(states.len(), actions.len() + 1);
        debug_assert_eq!(actions.len(), rewards.len());
        Self {
            states,
            actions,
            rewards,
        }
    }

    pub fn current_state(&self) -> &'a [S] {
        self.states.last().expect("history holds at least one state")
    }

    /// 1-based timestep of the current state.
    pub fn t(&self) -> usize {
        self.states.len()
    }
}

pub trait Policy<S: Scalar>: Send + Sync {
    fn num_actions(&self) -> usize;

    fn kind(&self) -> PolicyKind;

    /// `π(· | history)`; entries are non-negative and sum to 1.
    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S>;

    /// `π(· | s_1..s_t)` for every step `t` of a logged trajectory.
    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        let states: Vec<Vec<S>> = traj.transitions.iter().map(|tr| tr.state.clone()).collect();
        let actions: Vec<usize> = traj.transitions.iter().map(|tr| tr.action).collect();
        let rewards: Vec<VectorReward<S>> = traj.rewards().collect();
        (0..traj.len())
            .map(|t| self.action_probabilities(&History::new(&states[..=t], &actions[..t], &rewards[..t])))
            .collect()
    }
}

impl<S: Scalar, P: Policy<S> + ?Sized> Policy<S> for Box<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn kind(&self) -> PolicyKind {
        (**self).kind()
    }
    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        (**self).action_probabilities(history)
    }
    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        (**self).episode_probabilities(traj)
    }
}

impl<S: Scalar, P: Policy<S> + ?Sized> Policy<S> for std::sync::Arc<P> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn kind(&self) -> PolicyKind {
        (**self).kind()
    }
    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        (**self).action_probabilities(history)
    }
    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        (**self).episode_probabilities(traj)
    }
}

/// `1 − ε + ε/A` on the argmax (lowest id on ties), `ε/A` elsewhere.
pub fn epsilon_greedy<S: Scalar>(values: &[S], epsilon: f64) -> Vec<S> {
    let a = values.len();
    let floor = S::lit(epsilon) / S::from_usize_lossy(a);
    let mut probs = vec![floor; a];
    probs[argmax(values)] += S::one() - S::lit(epsilon);
    probs
}

/// `(1 − ε)·p + ε/A`.
pub fn blend_uniform<S: Scalar>(probs: &mut [S], epsilon: f64) {
    let eps = S::lit(epsilon);
    let floor = eps / S::from_usize_lossy(probs.len());
    for p in probs.iter_mut() {
        *p = (S::one() - eps) * *p + floor;
    }
}

/// Checks that `probs` is a distribution within `tol`.
pub fn is_distribution<S: Scalar>(probs: &[S], tol: f64) -> bool {
    let total: S = probs.iter().copied().sum();
    probs.iter().all(|&p| p >= S::zero() && p.is_finite()) && (total.as_f64() - 1.0).abs() <= tol
}

#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    pub num_actions: usize,
}

impl<S: Scalar> Policy<S> for UniformPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn kind(&self) -> PolicyKind {
        PolicyKind::Uniform
    }
    fn action_probabilities(&self, _history: &History<'_, S>) -> Vec<S> {
        vec![S::one() / S::from_usize_lossy(self.num_actions); self.num_actions]
    }
}
