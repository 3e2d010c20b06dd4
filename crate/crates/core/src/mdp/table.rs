use super::{Dataset, VectorReward};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Flattened `(s, a, r, s', done)` view of a dataset for minibatch learners.
///
/// The successor of step `t` is the logged state of step `t + 1`; terminal
/// transitions carry an all-zero successor that is always masked by `done`.
#[derive(Debug, Clone)]
pub struct TransitionTable<S> {
    pub state_dim: usize,
    pub num_actions: usize,
    pub states: Vec<S>,
    pub next_states: Vec<S>,
    pub actions: Vec<usize>,
    pub rewards: Vec<VectorReward<S>>,
    pub dones: Vec<bool>,
    /// `(episode index, 0-based step)` of every row.
    pub origin: Vec<(usize, usize)>,
}

impl<S: Scalar> TransitionTable<S> {
    pub fn from_dataset(data: &Dataset<S>) -> Self {
        let d = data.state_dim();
        let n = data.num_transitions();
        let mut table = Self {
            state_dim: d,
            num_actions: data.num_actions,
            states: Vec::with_capacity(n * d),
            next_states: Vec::with_capacity(n * d),
            actions: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
        };
        for (e, traj) in data.trajectories.iter().enumerate() {
            for (t, tr) in traj.transitions.iter().enumerate() {
                table.states.extend_from_slice(&tr.state);
                match traj.transitions.get(t + 1) {
                    Some(next) if !tr.done => table.next_states.extend_from_slice(&next.state),
                    _ => table.next_states.extend(std::iter::repeat_n(S::zero(), d)),
                }
                table.actions.push(tr.action);
                table.rewards.push(tr.reward);
                table.dones.push(tr.done);
                table.origin.push((e, t));
            }
        }
        table
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state(&self, i: usize) -> &[S] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn next_state(&self, i: usize) -> &[S] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn gather_states(&self, idx: &[usize]) -> Matrix<S> {
        self.gather(&self.states, idx)
    }

    pub fn gather_next_states(&self, idx: &[usize]) -> Matrix<S> {
        self.gather(&self.next_states, idx)
    }

    fn gather(&self, src: &[S], idx: &[usize]) -> Matrix<S> {
        let d = self.state_dim;
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        Matrix::from_vec(idx.len(), d, data).expect("gathered rows match state dim")
    }
}
