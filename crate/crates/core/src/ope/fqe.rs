use crate::baselines::sample_indices;
use crate::error::{Error, Result};
use crate::mdp::{scalarize, Dataset, PreferenceVector, TransitionTable};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix, Mlp, Parameters};
use crate::policy::Policy;
use crate::rng::derived_rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FqeConfig {
    /// Number of fitted backups.
    pub iterations: usize,
    /// Minibatch updates per backup.
    pub steps_per_iteration: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    /// Continue from the previous fit instead of refitting from the initial
    /// parameters at every backup.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for FqeConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            steps_per_iteration: 100,
            batch_size: 128,
            hidden: vec![32, 32],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            warm_start: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FqeResult<S> {
    /// Mean over episodes of `Σ_a π(a|s_1) Q(s_1, a)`.
    pub value: f64,
    /// The per-episode terms of that mean.
    pub initial_terms: Vec<f64>,
    /// Value estimate after every backup.
    pub iteration_values: Vec<f64>,
    pub q: Mlp<S>,
}

/// Expected next-state value under the policy, zero for terminal steps.
fn expected_values<S: Scalar>(q: &Matrix<S>, probs: &[Vec<S>]) -> Vec<S> {
    q.iter_rows()
        .zip(probs)
        .map(|(row, p)| row.iter().zip(p).map(|(&v, &pa)| v * pa).sum())
        .collect()
}


/// Fitted Q evaluation of `policy` on the ω-scalarized reward.
///
/// The first backup regresses the immediate reward; each later backup
/// regresses `r + γ(1 − done) Σ_a π(a|s') Q_prev(s', a)`. The policy is
/// queried along each logged episode, so history-dependent policies see the
/// same context as during importance sampling.
pub fn fqe<S, P>(policy: &P, data: &Dataset<S>, w: &PreferenceVector, gamma: f64, cfg: &FqeConfig) -> Result<FqeResult<S>>
where
    S: Scalar,
    P: Policy<S> + ?Sized,
{
    if cfg.iterations == 0 || cfg.steps_per_iteration == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("FQE needs positive iterations, steps and batch size".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    if policy.num_actions() != data.num_actions {
        return Err(Error::Shape("policy action count differs from the dataset".into()));
    }
    let table = TransitionTable::from_dataset(data);
    let episode_probs: Vec<Vec<Vec<S>>> = data.trajectories.iter().map(|t| policy.episode_probabilities(t)).collect();
    let next_probs: Vec<Vec<S>> = table
        .origin
        .iter()
        .zip(&table.dones)
        .map(|(&(e, t), &done)| {
            if done {
                vec![S::zero(); data.num_actions]
            } else {
                episode_probs[e][t + 1].clone()
            }
        })
        .collect();
    let rewards: Vec<S> = table.rewards.iter().map(|&r| scalarize(r, w)).collect();
    let r_max = rewards.iter().map(|r| r.abs().as_f64()).fold(0.0, f64::max);
    let horizon = data.trajectories.iter().map(|t| t.transitions.len()).max().unwrap_or(1) as f64;
    let effective = if gamma < 1.0 { (1.0 / (1.0 - gamma)).min(horizon) } else { horizon };
    let bound = r_max.max(1.0) * effective * 10.0;

    let initial_states = Matrix::from_rows(
        &data.trajectories.iter().map(|t| t.transitions[0].state.as_slice()).collect::<Vec<_>>(),
    )?;
    let initial_probs: Vec<Vec<S>> = episode_probs.iter().map(|p| p[0].clone()).collect();
    let all_states = table.gather_states(&(0..table.len()).collect::<Vec<_>>());
    let all_next = table.gather_next_states(&(0..table.len()).collect::<Vec<_>>());

    let mut dims = vec![data.state_dim()];
    dims.extend(&cfg.hidden);
    dims.push(data.num_actions);
    let mut init = Mlp::new(&dims, cfg.activation, &mut derived_rng(cfg.seed, &["fqe", "init"]))?;
    // Zero output layer: the initial fit is Q ≡ 0.
    if let Some(last) = init.layers.last_mut() {
        last.zero_();
    }
    let mut net = init.clone();
    let adam_cfg = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut adam = AdamState::new(&net, adam_cfg);
    let mut grads = net.zeros_like();
    let mut rng = derived_rng(cfg.seed, &["fqe", "batches"]);
    let g = S::lit(gamma);
    let b = cfg.batch_size;
    let inv_b = S::one() / S::from_usize_lossy(b);
    let mut iteration_values = Vec::with_capacity(cfg.iterations);
    let mut targets = rewards.clone();

    for it in 0..cfg.iterations {
        if it > 0 {
            let next_v = expected_values(&net.forward(&all_next)?, &next_probs);
            for i in 0..targets.len() {
                targets[i] = if table.dones[i] { rewards[i] } else { rewards[i] + g * next_v[i] };
            }
            if !cfg.warm_start {
                net = init.clone();
                adam = AdamState::new(&net, adam_cfg);
            }
        }
        for _ in 0..cfg.steps_per_iteration {
            let idx = sample_indices(table.len(), b, &mut rng);
            let tape = net.forward_tape(&table.gather_states(&idx))?;
            let mut d = Matrix::zeros(b, data.num_actions);
            for (r, &i) in idx.iter().enumerate() {
                let a = table.actions[i];
                d.set(r, a, S::lit(2.0) * (tape.output().get(r, a) - targets[i]) * inv_b);
            }
            grads.zero_();
            net.backward(&tape, &d, &mut grads)?;
            adam.step(&mut net, &grads)?;
        }
        let q = net.forward(&all_states)?;
        let mean_abs = (0..table.len())
            .map(|i| q.get(i, table.actions[i]).abs().as_f64())
            .sum::<f64>()
            / table.len() as f64;
        if !mean_abs.is_finite() || mean_abs > bound {
            return Err(Error::Divergence(format!(
                "FQE mean |Q| reached {mean_abs} at backup {} (bound {bound})",
                it + 1
            )));
        }
        let v = expected_values(&net.forward(&initial_states)?, &initial_probs);
        iteration_values.push(v.iter().map(|x| x.as_f64()).sum::<f64>() / v.len() as f64);
    }
    let v = expected_values(&net.forward(&initial_states)?, &initial_probs);
    let initial_terms: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
    let value = initial_terms.iter().sum::<f64>() / initial_terms.len() as f64;
    Ok(FqeResult { value, initial_terms, iteration_values, q: net })
}
