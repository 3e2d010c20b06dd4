//! Offline multi-objective reinforcement learning under conflicting
//! clinical objectives (mortality vs. length of stay).
//!
//! The crate bundles a vector-reward trajectory data model, a synthetic
//! ICU-style environment with a Monte Carlo ground truth, a small dense
//! network substrate, three scalarized offline baselines (behavior cloning,
//! double DQN, conservative Q-learning), two preference-conditioned
//! conservative Q-learners, a preference-conditioned decision transformer,
//! and off-policy evaluation by weighted importance sampling and fitted Q
//! evaluation with bootstrap confidence intervals.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the concrete instantiations.

pub mod baselines;
pub mod cpql;
pub mod dt;
pub mod error;
pub mod mdp;
pub mod nn;
pub mod ope;
pub mod pareto;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use mdp::{
    discounted_return, load_dataset, normalize_features, renormalize, save_dataset, scalarize, split_dataset, Dataset,
    NormalizationStats, PreferenceVector, Trajectory, Transition, VectorReward,
};
pub use policy::{History, Policy, PolicyKind};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type VectorReward64 = VectorReward<f64>;
pub type VectorReward32 = VectorReward<f32>;
pub type Mlp64 = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
