use std::sync::Arc;

use super::{DtModel, DtStep};
use crate::error::{Error, Result};
use crate::mdp::{PreferenceVector, Trajectory, NUM_OBJECTIVES};
use crate::nn::loss::softmax;
use crate::policy::{blend_uniform, History, Policy, PolicyKind};
use crate::scalar::Scalar;

/// Return prompt for preference `w`: `scale · max_return` projected onto the
/// direction of `w`.
pub fn target_return(max_return: &[f64; NUM_OBJECTIVES], w: &PreferenceVector, scale: f64) -> [f64; NUM_OBJECTIVES] {
    let wv = w.weights::<f64>();
    let norm2: f64 = wv.iter().map(|v| v * v).sum();
    let along: f64 = max_return.iter().zip(&wv).map(|(m, v)| m * v).sum::<f64>() / norm2;
    wv.map(|v| scale * along * v)
}

/// Return-conditioned policy: the prompt starts at the target return and is
/// decremented by the rewards observed so far.
#[derive(Debug, Clone)]
pub struct DtPolicy<S> {
    pub model: Arc<DtModel<S>>,
    pub preference: PreferenceVector,
    pub target: [S; NUM_OBJECTIVES],
    pub epsilon: f64,
}

pub fn dt_policy<S: Scalar>(
    model: Arc<DtModel<S>>,
    preference: PreferenceVector,
    target_rtg_scale: f64,
    epsilon: f64,
) -> Result<DtPolicy<S>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if !(target_rtg_scale.is_finite()) {
        return Err(Error::InvalidArgument("target_rtg_scale must be finite".into()));
    }
    let target = target_return(&model.max_return, &preference, target_rtg_scale).map(S::lit);
    Ok(DtPolicy { model, preference, target, epsilon })
}

impl<S: Scalar> DtPolicy<S> {
    fn pref_token(&self) -> Vec<S> {
        if self.model.config.preference_token {
            self.preference.weights::<S>().to_vec()
        } else {
            vec![S::zero(); NUM_OBJECTIVES]
        }
    }

    /// Prompt steps for a whole logged episode, every action filled in.
    pub(crate) fn prompt_steps(&self, states: &[&[S]], actions: &[usize], rewards: &[[S; NUM_OBJECTIVES]]) -> Vec<DtStep<S>> {
        let pref = self.pref_token();
        let mut rtg = self.target;
        states
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                if t > 0 {
                    for (g, r) in rtg.iter_mut().zip(rewards[t - 1]) {
                        *g -= r;
                    }
                }
                DtStep {
                    rtg: rtg.to_vec(),
                    pref: pref.clone(),
                    state: s.to_vec(),
                    action: actions.get(t).copied(),
                    timestep: t + 1,
                }
            })
            .collect()
    }

    fn probabilities_from_logits(&self, logits: &[S]) -> Vec<S> {
        let mut p = softmax(logits);
        blend_uniform(&mut p, self.epsilon);
        p
    }
}

impl<S: Scalar> Policy<S> for DtPolicy<S> {
    fn num_actions(&self) -> usize {
        self.model.network.num_actions()
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Conditioned
    }

    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        let states: Vec<&[S]> = history.states.iter().map(Vec::as_slice).collect();
        let rewards: Vec<[S; NUM_OBJECTIVES]> = history.rewards.iter().map(|r| r.to_array()).collect();
        let steps = self.prompt_steps(&states, history.actions, &rewards);
        let start = steps.len().saturating_sub(self.model.config.context_length);
        let window = &steps[start..];
        let logits = self.model.network.logits(window).expect("history matches network");
        self.probabilities_from_logits(logits.row(window.len() - 1))
    }

    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        let states: Vec<&[S]> = traj.transitions.iter().map(|t| t.state.as_slice()).collect();
        let actions: Vec<usize> = traj.transitions.iter().map(|t| t.action).collect();
        let rewards: Vec<[S; NUM_OBJECTIVES]> = traj.transitions.iter().map(|t| t.reward.to_array()).collect();
        let steps = self.prompt_steps(&states, &actions, &rewards);
        let c = self.model.config.context_length;
        let net = &self.model.network;
        // Windows of the first `C` steps all start at step 1, so one causal
        // pass yields their logits.
        let head = steps.len().min(c);
        let logits = net.logits(&steps[..head]).expect("trajectory matches network");
        let mut out: Vec<Vec<S>> = logits.iter_rows().map(|row| self.probabilities_from_logits(row)).collect();
        for end in head + 1..=steps.len() {
            let window = &steps[end - c..end];
            let logits = net.logits(window).expect("trajectory matches network");
            out.push(self.probabilities_from_logits(logits.row(c - 1)));
        }
        out
    }
}
