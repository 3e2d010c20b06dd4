use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mdp::{Dataset, Trajectory, TransitionTable};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{softmax, softmax_cross_entropy};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix, Mlp, Parameters};
use crate::policy::{History, Policy, PolicyKind};
use crate::rng::derived_rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BcReport {
    /// Mean cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Softmax classifier over actions.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy<S> {
    pub net: Mlp<S>,
}

impl<S: Scalar> SoftmaxPolicy<S> {
    pub fn probabilities(&self, state: &[S]) -> Vec<S> {
        softmax(&self.net.forward_one(state).expect("state width matches network"))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("bc");
        ck.push_mlp("net", &self.net);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model("bc")?;
        Ok(Self { net: ck.mlp("net")? })
    }
}

impl<S: Scalar> Policy<S> for SoftmaxPolicy<S> {
    fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Bc
    }

    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        self.probabilities(history.current_state())
    }

    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        let rows: Vec<&[S]> = traj.transitions.iter().map(|t| t.state.as_slice()).collect();
        let logits = self
            .net
            .forward(&Matrix::from_rows(&rows).expect("uniform state width"))
            .expect("state width matches network");
        logits.iter_rows().map(softmax).collect()
    }
}

/// Fits a softmax classifier to the logged actions by minibatch
/// cross-entropy.
pub fn train_bc<S: Scalar>(train: &Dataset<S>, cfg: &BcConfig) -> Result<(SoftmaxPolicy<S>, BcReport)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("behavior cloning needs a non-empty dataset".into()));
    }
    let table = TransitionTable::from_dataset(train);
    let mut dims = vec![train.state_dim()];
    dims.extend(&cfg.hidden);
    dims.push(train.num_actions);
    let mut net = Mlp::new(&dims, cfg.activation, &mut derived_rng(cfg.seed, &["bc", "init"]))?;
    let mut adam = AdamState::new(&net, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = net.zeros_like();
    let mut order: Vec<usize> = (0..table.len()).collect();
    let mut shuffle_rng = derived_rng(cfg.seed, &["bc", "shuffle"]);
    let mut report = BcReport::default();
    let batch = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(batch) {
            let x = table.gather_states(idx);
            let tape = net.forward_tape(&x)?;
            let scale = S::one() / S::from_usize_lossy(idx.len());
            let mut d_logits = Matrix::zeros(idx.len(), train.num_actions);
            for (r, &i) in idx.iter().enumerate() {
                let (loss, g) = softmax_cross_entropy(tape.output().row(r), table.actions[i]);
                epoch_loss += loss.as_f64();
                for (d, gv) in d_logits.row_mut(r).iter_mut().zip(g) {
                    *d = gv * scale;
                }
            }
            grads.zero_();
            net.backward(&tape, &d_logits, &mut grads)?;
            adam.step(&mut net, &grads)?;
        }
        report.epoch_losses.push(epoch_loss / table.len() as f64);
    }
    Ok((SoftmaxPolicy { net }, report))
}
