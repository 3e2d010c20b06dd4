//! Multi-objective decision transformer.
//!
//! Each timestep contributes three tokens: the vector return-to-go fused
//! with a preference, the state, and the action. Action logits are read at
//! state tokens. Returns-to-go are undiscounted suffix sums.

mod model;
mod policy;

pub use model::DtNetwork;
use model::DtTape;
pub use policy::{dt_policy, target_return, DtPolicy};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mdp::{Dataset, Trajectory, NUM_OBJECTIVES};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::{AdamConfig, AdamState, Matrix, Parameters};
use crate::rng::derived_rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DtConfig {
    /// Timesteps per window.
    pub context_length: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub learning_rate: f64,
    /// Windows per update.
    pub batch_size: usize,
    pub epochs: usize,
    /// Feed the preference next to the return-to-go. When off the
    /// preference slots are zero and only the vector return prompts.
    pub preference_token: bool,
    pub seed: u64,
}

impl Default for DtConfig {
    fn default() -> Self {
        Self {
            context_length: 10,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 2,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            preference_token: true,
            seed: 0,
        }
    }
}

impl DtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_length == 0 {
            return Err(Error::InvalidArgument("context_length must be ≥ 1".into()));
        }
        if self.num_heads == 0 || self.embed_dim == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One timestep of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct DtStep<S> {
    pub rtg: Vec<S>,
    pub pref: Vec<S>,
    pub state: Vec<S>,
    /// Logged action; `None` when it is still to be chosen.
    pub action: Option<usize>,
    /// 1-based step index within the episode.
    pub timestep: usize,
}

impl<S: Scalar> DtStep<S> {
    pub(crate) fn return_input(&self) -> Vec<S> {
        let mut v = self.rtg.clone();
        v.extend_from_slice(&self.pref);
        v
    }
}

/// Fixed-length window, left-padded. `mask[i]` is true for real steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DtSequence<S> {
    pub steps: Vec<DtStep<S>>,
    pub mask: Vec<bool>,
}

impl<S: Scalar> DtSequence<S> {
    /// Left-pads `steps` to `len` with zero steps.
    pub fn padded(steps: Vec<DtStep<S>>, len: usize) -> Result<Self> {
        if steps.len() > len {
            return Err(Error::Shape(format!("{} steps do not fit a window of {len}", steps.len())));
        }
        let pad = len - steps.len();
        let template = steps.first().map(|s| DtStep {
            rtg: vec![S::zero(); s.rtg.len()],
            pref: vec![S::zero(); s.pref.len()],
            state: vec![S::zero(); s.state.len()],
            action: None,
            timestep: 0,
        });
        let mut all = Vec::with_capacity(len);
        let mut mask = Vec::with_capacity(len);
        if let Some(t) = template {
            for _ in 0..pad {
                all.push(t.clone());
                mask.push(false);
            }
        }
        mask.extend(std::iter::repeat_n(true, steps.len()));
        all.extend(steps);
        Ok(Self { steps: all, mask })
    }

    /// The unpadded steps.
    pub fn valid(&self) -> &[DtStep<S>] {
        let first = self.mask.iter().position(|&m| m).unwrap_or(self.mask.len());
        &self.steps[first..]
    }
}

/// Suffix sums of the vector rewards: `rtg_t = Σ_{u ≥ t} r_u`.
pub fn returns_to_go<S: Scalar>(traj: &Trajectory<S>) -> Vec<[S; NUM_OBJECTIVES]> {
    let mut out = vec![[S::zero(); NUM_OBJECTIVES]; traj.transitions.len()];
    let mut acc = [S::zero(); NUM_OBJECTIVES];
    for (t, tr) in traj.transitions.iter().enumerate().rev() {
        for (a, r) in acc.iter_mut().zip(tr.reward.to_array()) {
            *a += r;
        }
        out[t] = acc;
    }
    out
}

/// Direction of the episode's total return, `[0.5, 0.5]` when it is zero.
pub fn return_direction<S: Scalar>(total: &[S; NUM_OBJECTIVES]) -> [S; NUM_OBJECTIVES] {
    let sum: S = total.iter().copied().sum();
    if sum > S::zero() {
        total.map(|v| v / sum)
    } else {
        [S::lit(0.5); NUM_OBJECTIVES]
    }
}

fn episode_steps<S: Scalar>(traj: &Trajectory<S>, preference_token: bool) -> Vec<DtStep<S>> {
    let rtg = returns_to_go(traj);
    let pref = if preference_token {
        rtg.first().map_or([S::lit(0.5); NUM_OBJECTIVES], return_direction)
    } else {
        [S::zero(); NUM_OBJECTIVES]
    };
    traj.transitions
        .iter()
        .zip(rtg)
        .map(|(tr, g)| DtStep {
            rtg: g.to_vec(),
            pref: pref.to_vec(),
            state: tr.state.clone(),
            action: Some(tr.action),
            timestep: tr.t,
        })
        .collect()
}

/// Training windows: the first `min(T, C)` steps of every episode, then one
/// window ending at each later step.
pub fn build_sequences<S: Scalar>(
    data: &Dataset<S>,
    context_length: usize,
    preference_token: bool,
) -> Result<Vec<DtSequence<S>>> {
    if context_length == 0 {
        return Err(Error::InvalidArgument("context_length must be ≥ 1".into()));
    }
    let mut out = Vec::new();
    for traj in &data.trajectories {
        let steps = episode_steps(traj, preference_token);
        let first_end = steps.len().min(context_length);
        for end in first_end..=steps.len() {
            let start = end.saturating_sub(context_length);
            out.push(DtSequence::padded(steps[start..end].to_vec(), context_length)?);
        }
    }
    Ok(out)
}

/// Summed cross-entropy over the sequence's real steps, the number of those
/// steps, and the logit gradient.
fn sequence_loss<S: Scalar>(
    net: &DtNetwork<S>,
    steps: &[DtStep<S>],
) -> Result<(S, usize, DtTape<S>, Matrix<S>)> {
    let tape = net.forward_tape(steps)?;
    let mut d = Matrix::zeros(tape.logits.rows(), tape.logits.cols());
    let mut loss = S::zero();
    for (i, st) in steps.iter().enumerate() {
        let target = st.action.ok_or_else(|| Error::InvalidArgument("training step lacks an action".into()))?;
        let (l, g) = softmax_cross_entropy(tape.logits.row(i), target);
        loss += l;
        d.row_mut(i).copy_from_slice(&g);
    }
    Ok((loss, steps.len(), tape, d))
}

/// Mean cross-entropy of the logged actions over the real steps of
/// `sequences`; zero when there are none.
pub fn dt_loss<S: Scalar>(net: &DtNetwork<S>, sequences: &[DtSequence<S>]) -> Result<S> {
    let mut total = S::zero();
    let mut count = 0;
    for seq in sequences {
        let valid = seq.valid();
        if valid.is_empty() {
            continue;
        }
        let (l, c, _, _) = sequence_loss(net, valid)?;
        total += l;
        count += c;
    }
    Ok(if count == 0 { S::zero() } else { total / S::from_usize_lossy(count) })
}

/// Fraction of real steps whose arg-max logit is the logged action.
pub fn dt_accuracy<S: Scalar>(net: &DtNetwork<S>, sequences: &[DtSequence<S>]) -> Result<f64> {
    let (mut hits, mut count) = (0usize, 0usize);
    for seq in sequences {
        let valid = seq.valid();
        if valid.is_empty() {
            continue;
        }
        let logits = net.logits(valid)?;
        for (i, st) in valid.iter().enumerate() {
            count += 1;
            if Some(crate::nn::loss::argmax(logits.row(i))) == st.action {
                hits += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { hits as f64 / count as f64 })
}

/// Trained network plus what inference needs from the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct DtModel<S> {
    pub network: DtNetwork<S>,
    pub config: DtConfig,
    /// Component-wise maximum episode return of the training data.
    pub max_return: [f64; NUM_OBJECTIVES],
}

#[derive(Debug, Clone, Default)]
pub struct DtReport {
    /// Mean per-step cross-entropy during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl<S: Scalar> DtModel<S> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("peda_dt");
        self.network.write_checkpoint(&mut ck);
        ck.set_meta("context_length", self.config.context_length)
            .set_meta("learning_rate", self.config.learning_rate)
            .set_meta("batch_size", self.config.batch_size)
            .set_meta("epochs", self.config.epochs)
            .set_meta("preference_token", self.config.preference_token)
            .set_meta("seed", self.config.seed)
            .set_meta("max_return", self.max_return.to_vec());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model("peda_dt")?;
        let network = DtNetwork::read_checkpoint(ck)?;
        let max_return: Vec<f64> = ck
            .meta("max_return")?
            .as_array()
            .and_then(|a| a.iter().map(|v| v.as_f64()).collect())
            .ok_or_else(|| Error::Checkpoint("max_return is not a number list".into()))?;
        let max_return: [f64; NUM_OBJECTIVES] = max_return
            .try_into()
            .map_err(|_| Error::Checkpoint("max_return has the wrong length".into()))?;
        let config = DtConfig {
            context_length: ck.meta_usize("context_length")?,
            embed_dim: ck.meta_usize("embed_dim")?,
            num_layers: ck.meta_usize("num_layers")?,
            num_heads: ck.meta_usize("num_heads")?,
            learning_rate: ck.meta_f64("learning_rate")?,
            batch_size: ck.meta_usize("batch_size")?,
            epochs: ck.meta_usize("epochs")?,
            preference_token: ck.meta_bool("preference_token")?,
            seed: ck.meta("seed")?.as_u64().unwrap_or_default(),
        };
        Ok(Self { network, config, max_return })
    }
}

/// Trains by action prediction on every real step of every window.
pub fn train_dt<S: Scalar>(train: &Dataset<S>, cfg: &DtConfig) -> Result<(DtModel<S>, DtReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("DT training needs a non-empty dataset".into()));
    }
    let max_timestep = train.trajectories.iter().map(|t| t.transitions.len()).max().unwrap_or(1);
    let mut net = DtNetwork::new(
        cfg,
        train.state_dim(),
        train.num_actions,
        2 * NUM_OBJECTIVES,
        max_timestep,
        &mut derived_rng(cfg.seed, &["dt", "init"]),
    )?;
    let sequences = build_sequences(train, cfg.context_length, cfg.preference_token)?;
    let mut adam = AdamState::new(&net, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = net.zeros_like();
    let mut rng = derived_rng(cfg.seed, &["dt", "shuffle"]);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut report = DtReport::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            grads.zero_();
            let mut work = Vec::with_capacity(batch.len());
            let mut count = 0;
            for &i in batch {
                let valid = sequences[i].valid();
                let (loss, c, tape, d) = sequence_loss(&net, valid)?;
                epoch_loss += loss.as_f64();
                count += c;
                work.push((i, tape, d));
            }
            let inv = S::one() / S::from_usize_lossy(count.max(1));
            for (i, tape, mut d) in work {
                d.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
                net.backward(&tape, sequences[i].valid(), &d, &mut grads)?;
            }
            epoch_count += count;
            adam.step(&mut net, &grads)?;
        }
        report.epoch_losses.push(epoch_loss / epoch_count.max(1) as f64);
    }
    if !net.all_finite() {
        return Err(Error::Divergence("DT parameters became non-finite".into()));
    }
    let mut max_return = [f64::NEG_INFINITY; NUM_OBJECTIVES];
    for traj in &train.trajectories {
        if let Some(first) = returns_to_go(traj).first() {
            for (m, v) in max_return.iter_mut().zip(first) {
                *m = m.max(v.as_f64());
            }
        }
    }
    Ok((DtModel { network: net, config: cfg.clone(), max_return }, report))
}
