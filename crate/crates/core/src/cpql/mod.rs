//! Preference-conditioned conservative Q-learning over vector rewards.
//!
//! One network `Q(s, a; ω) ∈ R^K` is trained for all preferences at once.
//! Actions are chosen by the scalarized value `ωᵀQ`, the backup is done per
//! objective and the conservatism penalty is applied to the scalarized
//! values.

mod model;
mod policy;

pub use model::{Conditioning, VectorQModel};
pub use policy::{policy_at, ConditionedQPolicy};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{sample_indices, QTrainReport};
use crate::error::{Error, Result};
use crate::mdp::{scalarize, Dataset, PreferenceVector, TransitionTable, NUM_OBJECTIVES};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{argmax, logsumexp};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix, Parameters};
use crate::rng::derived_rng;
use crate::scalar::Scalar;

/// Source of training preferences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PreferenceSampler {
    /// Points of the grid with the given step.
    Grid { step: f64 },
    /// Uniform on the simplex.
    Uniform { step: f64 },
    /// Always the same preference.
    Fixed { preference: PreferenceVector },
}

impl Default for PreferenceSampler {
    fn default() -> Self {
        PreferenceSampler::Uniform { step: 0.1 }
    }
}

impl PreferenceSampler {
    pub fn mode(&self) -> &'static str {
        match self {
            PreferenceSampler::Grid { .. } => "grid",
            PreferenceSampler::Uniform { .. } => "uniform",
            PreferenceSampler::Fixed { .. } => "fixed",
        }
    }

    /// Preferences for one minibatch. For grid and uniform modes the first
    /// `min(n, grid size)` entries walk the grid from a random offset, so
    /// every update covers the grid once the batch is at least that large.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<PreferenceVector>> {
        let step = match *self {
            PreferenceSampler::Fixed { preference } => return Ok(vec![preference; n]),
            PreferenceSampler::Grid { step } | PreferenceSampler::Uniform { step } => step,
        };
        let grid = PreferenceVector::sweep(step)?;
        let offset = rng.random_range(0..grid.len());
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let w = if j < grid.len() {
                grid[(offset + j) % grid.len()]
            } else if let PreferenceSampler::Grid { .. } = self {
                grid[rng.random_range(0..grid.len())]
            } else {
                PreferenceVector::from_mortality(rng.random::<f64>())?
            };
            out.push(w);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpqlConfig {
    pub conditioning: Conditioning,
    pub alpha: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub target_sync_period: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    /// Width of the gate network's hidden layer (attention variant).
    pub gate_hidden: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub sampler: PreferenceSampler,
    /// `2` for vector Q; `1` regresses the ω-scalarized reward instead.
    pub num_objectives: usize,
    pub seed: u64,
}

impl Default for CpqlConfig {
    fn default() -> Self {
        Self {
            conditioning: Conditioning::Concat,
            alpha: 1.0,
            gamma: 0.99,
            iterations: 5_000,
            target_sync_period: 500,
            batch_size: 64,
            hidden: vec![64, 64],
            gate_hidden: 16,
            activation: Activation::Relu,
            learning_rate: 1e-3,
            sampler: PreferenceSampler::default(),
            num_objectives: NUM_OBJECTIVES,
            seed: 0,
        }
    }
}

/// Vector double-Q targets for one transition: the greedy next action
/// maximizes the online network's scalarized value, its Q-vector comes from
/// the target network.
pub fn vector_targets<S: Scalar>(
    reward: &[S],
    done: bool,
    online_next: &[S],
    target_next: &[S],
    weights: &[S],
    gamma: S,
) -> Vec<S> {
    if done {
        return reward.to_vec();
    }
    let k = reward.len();
    let scalar: Vec<S> = online_next
        .chunks(k)
        .map(|q| q.iter().zip(weights).map(|(&v, &w)| v * w).sum())
        .collect();
    let a_star = argmax(&scalar);
    reward
        .iter()
        .zip(&target_next[a_star * k..(a_star + 1) * k])
        .map(|(&r, &q)| r + gamma * q)
        .collect()
}

/// Trains one preference-conditioned model on all preferences the sampler
/// produces.
pub fn train_cpql<S: Scalar>(data: &Dataset<S>, cfg: &CpqlConfig) -> Result<(VectorQModel<S>, QTrainReport)> {
    if !(cfg.alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be ≥ 0, got {}", cfg.alpha)));
    }
    if !(0.0..=1.0).contains(&cfg.gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {}", cfg.gamma)));
    }
    if cfg.target_sync_period == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("target_sync_period and batch_size must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("CPQL needs a non-empty dataset".into()));
    }
    // Same stream names as the scalar Q-learners, so the concat variant
    // with one objective and a fixed preference replays CQL exactly.
    let tag = "q_learning";
    let table = TransitionTable::from_dataset(data);
    let mut online = VectorQModel::new(
        cfg.conditioning,
        data.state_dim(),
        data.num_actions,
        cfg.num_objectives,
        &cfg.hidden,
        cfg.gate_hidden,
        cfg.activation,
        &mut derived_rng(cfg.seed, &[tag, "init"]),
    )?;
    let mut target = online.clone();
    let mut adam = AdamState::new(&online, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = online.zeros_like();
    let mut batch_rng = derived_rng(cfg.seed, &[tag, "batches"]);
    let mut pref_rng = derived_rng(cfg.seed, &["cpql", "preferences"]);
    let gamma = S::lit(cfg.gamma);
    let alpha = S::lit(cfg.alpha);
    let b = cfg.batch_size;
    let inv_b = S::one() / S::from_usize_lossy(b);
    let k = cfg.num_objectives;
    let num_actions = data.num_actions;
    let mut report = QTrainReport::default();

    for step in 0..cfg.iterations {
        let idx = sample_indices(table.len(), b, &mut batch_rng);
        let prefs = cfg.sampler.sample_batch(b, &mut pref_rng)?;
        let tape = online.forward_tape(&table.gather_states(&idx), &prefs)?;
        let next = table.gather_next_states(&idx);
        let online_next = online.forward(&next, &prefs)?;
        let target_next = target.forward(&next, &prefs)?;

        let q = tape.output();
        let mut d_q = Matrix::zeros(b, num_actions * k);
        let mut loss = S::zero();
        let mut penalty_sum = S::zero();
        for (r, &i) in idx.iter().enumerate() {
            let a = table.actions[i];
            let weights = online.objective_weights(&prefs[r]);
            let reward: Vec<S> = if k == 1 {
                vec![scalarize(table.rewards[i], &prefs[r])]
            } else {
                table.rewards[i].to_array().to_vec()
            };
            let y = vector_targets(
                &reward,
                table.dones[i],
                online_next.row(r),
                target_next.row(r),
                &weights,
                gamma,
            );
            let row = q.row(r);
            for (j, &yj) in y.iter().enumerate() {
                let diff = row[a * k + j] - yj;
                loss += diff * diff * inv_b;
                d_q.set(r, a * k + j, S::lit(2.0) * diff * inv_b);
            }
            let scalar = online.scalarized(row, &weights);
            let lse = logsumexp(&scalar);
            let pen = lse - scalar[a];
            penalty_sum += pen;
            let pen_f = pen.as_f64();
            report.min_penalty = Some(report.min_penalty.map_or(pen_f, |m: f64| m.min(pen_f)));
            loss += alpha * pen * inv_b;
            let d_row = d_q.row_mut(r);
            for (act, &v) in scalar.iter().enumerate() {
                let indicator = if act == a { S::one() } else { S::zero() };
                let g = alpha * inv_b * ((v - lse).exp() - indicator);
                for (j, &w) in weights.iter().enumerate() {
                    d_row[act * k + j] += g * w;
                }
            }
        }
        report.losses.push(loss.as_f64());
        report.penalties.push((penalty_sum * inv_b).as_f64());
        grads.zero_();
        online.backward(&tape, &d_q, &mut grads)?;
        adam.step(&mut online, &grads)?;
        if (step + 1) % cfg.target_sync_period == 0 {
            target.copy_from(&online);
            report.target_syncs += 1;
        }
    }
    if !online.all_finite() {
        return Err(Error::Divergence("CPQL parameters became non-finite".into()));
    }
    Ok((online, report))
}

/// Checkpoint carrying the network and its training configuration.
pub fn cpql_checkpoint<S: Scalar>(model: &VectorQModel<S>, cfg: &CpqlConfig) -> Checkpoint {
    let mut ck = Checkpoint::new("cpql");
    model.write_checkpoint(&mut ck);
    ck.set_meta("alpha", cfg.alpha)
        .set_meta("gamma", cfg.gamma)
        .set_meta("seed", cfg.seed)
        .set_meta("sampler", cfg.sampler.mode())
        .set_meta("K", model.num_objectives());
    ck
}

pub fn cpql_from_checkpoint<S: Scalar>(ck: &Checkpoint) -> Result<VectorQModel<S>> {
    ck.expect_model("cpql")?;
    VectorQModel::read_checkpoint(ck)
}
