//! Vector-reward trajectory data model shared by every learner and estimator.

mod io;
mod table;
mod transform;

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset};
pub use table::TransitionTable;
pub use transform::{normalize_features, renormalize, split_dataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of reward objectives: mortality and length of stay.
pub const NUM_OBJECTIVES: usize = 2;

/// Per-step reward over the two clinical objectives, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VectorReward<S> {
    pub mortality: S,
    pub los: S,
}

impl<S: Scalar> VectorReward<S> {
    pub fn new(mortality: S, los: S) -> Self {
        Self { mortality, los }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    pub fn to_array(self) -> [S; NUM_OBJECTIVES] {
        [self.mortality, self.los]
    }

    pub fn from_array(v: [S; NUM_OBJECTIVES]) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.mortality.is_finite() && self.los.is_finite()
    }

    fn in_unit_range(&self) -> bool {
        let unit = |x: S| x >= S::zero() && x <= S::one();
        unit(self.mortality) && unit(self.los)
    }
}

impl<S: Scalar> std::ops::Add for VectorReward<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.mortality + rhs.mortality, self.los + rhs.los)
    }
}

impl<S: Scalar> std::ops::Sub for VectorReward<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.mortality - rhs.mortality, self.los - rhs.los)
    }
}

/// Weights over (mortality, LOS) on the 2-simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector {
    w_mortality: f64,
    w_los: f64,
}

impl PreferenceVector {
    pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

    pub fn new(w_mortality: f64, w_los: f64) -> Result<Self> {
        if !(w_mortality.is_finite() && w_los.is_finite()) || w_mortality < 0.0 || w_los < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "preference weights must be finite and non-negative, got [{w_mortality}, {w_los}]"
            )));
        }
        if (w_mortality + w_los - 1.0).abs() > Self::SIMPLEX_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "preference weights must sum to 1, got [{w_mortality}, {w_los}]"
            )));
        }
        Ok(Self { w_mortality, w_los })
    }

    /// `[x, 1 - x]`, the parameterization used by the preference sweep.
    pub fn from_mortality(x: f64) -> Result<Self> {
        Self::new(x, 1.0 - x)
    }

    pub fn equal() -> Self {
        Self {
            w_mortality: 0.5,
            w_los: 0.5,
        }
    }

    pub fn w_mortality(&self) -> f64 {
        self.w_mortality
    }

    pub fn w_los(&self) -> f64 {
        self.w_los
    }

    pub fn weights<S: Scalar>(&self) -> [S; NUM_OBJECTIVES] {
        [S::lit(self.w_mortality), S::lit(self.w_los)]
    }

    /// Grid `[0,1], [step,1-step], ..., [1,0]` inclusive of both corners.
    pub fn sweep(step: f64) -> Result<Vec<Self>> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidArgument(format!("sweep step must be in (0,1], got {step}")));
        }
        let n = (1.0 / step).round() as usize;
        if ((n as f64) * step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("sweep step {step} does not divide 1")));
        }
        (0..=n)
            .map(|i| {
                // Round to 12 decimals so 0.1-grid points print as 0.3, not 0.30000000000000004.
                let x = ((i as f64 / n as f64) * 1e12).round() / 1e12;
                Self::new(x, ((1.0 - x) * 1e12).round() / 1e12)
            })
            .collect()
    }
}

/// Weighted-sum scalarization of a vector reward.
pub fn scalarize<S: Scalar>(r: VectorReward<S>, w: &PreferenceVector) -> S {
    let [wm, wl] = w.weights::<S>();
    wm * r.mortality + wl * r.los
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: Vec<S>,
    pub action: usize,
    pub reward: VectorReward<S>,
    pub done: bool,
    /// 1-based timestep within the episode.
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub id: u64,
    pub transitions: Vec<Transition<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = VectorReward<S>> + '_ {
        self.transitions.iter().map(|tr| tr.reward)
    }

    /// Checks the trajectory against dimension `d` and action count `a`.
    pub fn validate(&self, d: usize, a: usize) -> Result<()> {
        let id = Some(self.id);
        if self.transitions.is_empty() {
            return Err(Error::validation(id, "trajectory has no transitions"));
        }
        let last = self.transitions.len() - 1;
        for (i, tr) in self.transitions.iter().enumerate() {
            if tr.t != i + 1 {
                return Err(Error::validation(
                    id,
                    format!("timesteps must be 1..T consecutive, found t={} at position {}", tr.t, i + 1),
                ));
            }
            if tr.state.len() != d {
                return Err(Error::validation(
                    id,
                    format!("state at t={} has {} features, expected {d}", tr.t, tr.state.len()),
                ));
            }
            if tr.state.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(id, format!("non-finite state feature at t={}", tr.t)));
            }
            if tr.action >= a {
                return Err(Error::validation(
                    id,
                    format!("action {} at t={} out of range [0, {a})", tr.action, tr.t),
                ));
            }
            if !tr.reward.is_finite() || !tr.reward.in_unit_range() {
                return Err(Error::validation(
                    id,
                    format!("reward at t={} outside [0,1] or non-finite", tr.t),
                ));
            }
            if tr.done != (i == last) {
                return Err(Error::validation(
                    id,
                    "exactly the final transition must have done = true",
                ));
            }
        }
        Ok(())
    }
}

/// Per-feature affine normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
}

impl<S: Scalar> NormalizationStats<S> {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![S::zero(); d],
            std: vec![S::one(); d],
        }
    }

    pub fn apply(&self, raw: &[S]) -> Vec<S> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, normalized: &[S]) -> Vec<S> {
        normalized
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&z, (&m, &s))| z * s + m)
            .collect()
    }

    /// Recovers a single raw feature value.
    pub fn invert_feature(&self, index: usize, normalized: S) -> S {
        normalized * self.std[index] + self.mean[index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub trajectories: Vec<Trajectory<S>>,
    pub feature_names: Vec<String>,
    pub num_actions: usize,
    pub normalization: NormalizationStats<S>,
}

impl<S: Scalar> Dataset<S> {
    /// Builds a dataset and checks every invariant.
    pub fn new(
        trajectories: Vec<Trajectory<S>>,
        feature_names: Vec<String>,
        num_actions: usize,
        normalization: NormalizationStats<S>,
    ) -> Result<Self> {
        let ds = Self {
            trajectories,
            feature_names,
            num_actions,
            normalization,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn state_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::validation(None, "dataset must contain N ≥ 1 trajectories"));
        }
        if self.num_actions == 0 {
            return Err(Error::validation(None, "num_actions must be positive"));
        }
        let d = self.state_dim();
        if self.normalization.mean.len() != d || self.normalization.std.len() != d {
            return Err(Error::validation(None, "normalization stats do not match feature count"));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.trajectories.len());
        for traj in &self.trajectories {
            if !seen.insert(traj.id) {
                return Err(Error::validation(Some(traj.id), "duplicate episode id"));
            }
            traj.validate(d, self.num_actions)?;
        }
        Ok(())
    }

    /// Same metadata, different trajectory subset.
    pub fn with_trajectories(&self, trajectories: Vec<Trajectory<S>>) -> Result<Self> {
        Self::new(
            trajectories,
            self.feature_names.clone(),
            self.num_actions,
            self.normalization.clone(),
        )
    }

    /// Component-wise maximum undiscounted episode return.
    pub fn max_return(&self) -> VectorReward<S> {
        self.trajectories
            .iter()
            .map(|t| discounted_return(t, S::one()))
            .fold(VectorReward::new(S::neg_infinity(), S::neg_infinity()), |acc, r| {
                VectorReward::new(acc.mortality.max(r.mortality), acc.los.max(r.los))
            })
    }

    /// Mean of `scalarize(discounted_return(traj, gamma), w)` over episodes.
    pub fn mean_scalarized_return(&self, w: &PreferenceVector, gamma: S) -> S {
        let total: S = self
            .trajectories
            .iter()
            .map(|t| scalarize(discounted_return(t, gamma), w))
            .sum();
        total / S::from_usize_lossy(self.len())
    }
}

/// Component-wise `Σ_t γ^(t-1) r_t`.
pub fn discounted_return<S: Scalar>(traj: &Trajectory<S>, gamma: S) -> VectorReward<S> {
    let mut acc = VectorReward::zero();
    let mut discount = S::one();
    for tr in &traj.transitions {
        acc.mortality += discount * tr.reward.mortality;
        acc.los += discount * tr.reward.los;
        discount *= gamma;
    }
    acc
}
