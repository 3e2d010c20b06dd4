use crate::baselines::{train_bc, BcConfig, SoftmaxPolicy};
use crate::error::{Error, Result};
use crate::mdp::{Dataset, Trajectory};
use crate::nn::checkpoint::Checkpoint;
use crate::policy::{History, Policy, PolicyKind};
use crate::scalar::Scalar;

/// Default probability floor of the estimated behavior policy.
pub const DEFAULT_P_MIN: f64 = 1e-3;

/// Estimated behavior policy `π_b` with every action probability at least
/// `p_min`.
#[derive(Debug, Clone)]
pub struct BehaviorModel<S> {
    pub classifier: SoftmaxPolicy<S>,
    pub p_min: f64,
}

impl<S: Scalar> BehaviorModel<S> {
    pub fn new(classifier: SoftmaxPolicy<S>, p_min: f64) -> Result<Self> {
        let a = classifier.net.output_dim();
        if !(p_min > 0.0 && p_min * (a as f64) < 1.0) {
            return Err(Error::InvalidArgument(format!("p_min must lie in (0, 1/A), got {p_min} with A = {a}")));
        }
        Ok(Self { classifier, p_min })
    }

    /// `(1 − A·p_min)·p + p_min`: floored and still normalized.
    fn floor(&self, mut probs: Vec<S>) -> Vec<S> {
        let p_min = S::lit(self.p_min);
        let keep = S::one() - p_min * S::from_usize_lossy(probs.len());
        for p in probs.iter_mut() {
            *p = keep * *p + p_min;
        }
        probs
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.classifier.to_checkpoint();
        ck.model = "behavior".into();
        ck.set_meta("p_min", self.p_min);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_model("behavior")?;
        let mut inner = ck.clone();
        inner.model = "bc".into();
        Self::new(SoftmaxPolicy::from_checkpoint(&inner)?, ck.meta_f64("p_min")?)
    }
}

/// Fits `π_b` by behavior cloning and applies the probability floor.
pub fn fit_behavior<S: Scalar>(train: &Dataset<S>, p_min: f64, cfg: &BcConfig) -> Result<BehaviorModel<S>> {
    let a = train.num_actions as f64;
    if !(p_min > 0.0 && p_min < 1.0 / a) {
        return Err(Error::InvalidArgument(format!("p_min must lie in (0, 1/A), got {p_min}")));
    }
    let (classifier, _) = train_bc(train, cfg)?;
    BehaviorModel::new(classifier, p_min)
}

impl<S: Scalar> Policy<S> for BehaviorModel<S> {
    fn num_actions(&self) -> usize {
        self.classifier.num_actions()
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Behavior
    }

    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        self.floor(self.classifier.action_probabilities(history))
    }

    fn episode_probabilities(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        self.classifier
            .episode_probabilities(traj)
            .into_iter()
            .map(|p| self.floor(p))
            .collect()
    }
}
