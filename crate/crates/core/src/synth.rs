//! Synthetic ICU-style environment with a known ground truth.
//!
//! A single latent severity in `[0, 1]` drifts upward and is pushed down by
//! treatment intensity `x = a / (A − 1)`. Intense treatment also carries a
//! per-step complication hazard `complication_rate · x³` that is fatal, so
//! aggressive policies discharge patients sooner but lose more of them:
//! survival and length of stay genuinely conflict. Death happens when
//! severity reaches 1 or a complication occurs, discharge when it reaches 0,
//! and reaching `t_max` counts as survival.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    discounted_return, normalize_features, scalarize, Dataset, NormalizationStats, PreferenceVector,
    Trajectory, Transition, VectorReward,
};
use crate::policy::{History, Policy, PolicyKind};
use crate::rng::{derive_indexed, rng_from_seed};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// State dimension `D`.
    pub d: usize,
    /// Action count `A`.
    pub a: usize,
    pub t_max: usize,
    pub severity_drift: f64,
    pub treatment_effect: f64,
    pub noise_std: f64,
    pub complication_rate: f64,
    pub initial_severity_low: f64,
    pub initial_severity_high: f64,
    /// Exploration rate of the data-generating clinician policy.
    pub behavior_epsilon: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            d: 8,
            a: 5,
            t_max: 20,
            severity_drift: 0.01,
            treatment_effect: 0.1,
            noise_std: 0.05,
            complication_rate: 0.3,
            initial_severity_low: 0.3,
            initial_severity_high: 0.7,
            behavior_epsilon: 0.3,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d < 2 || self.a < 2 || self.t_max < 2 {
            return bad(format!(
                "need D ≥ 2, A ≥ 2, T_max ≥ 2 (got {}, {}, {})",
                self.d, self.a, self.t_max
            ));
        }
        if !(self.noise_std > 0.0) {
            return bad(format!("noise_std must be > 0, got {}", self.noise_std));
        }
        if !(0.0..=1.0).contains(&self.behavior_epsilon) {
            return bad(format!("behavior_epsilon must lie in [0,1], got {}", self.behavior_epsilon));
        }
        if !(0.0..=1.0).contains(&self.complication_rate) {
            return bad(format!("complication_rate must lie in [0,1], got {}", self.complication_rate));
        }
        if !(0.0 <= self.initial_severity_low
            && self.initial_severity_low <= self.initial_severity_high
            && self.initial_severity_high <= 1.0)
        {
            return bad("initial severity range must satisfy 0 ≤ low ≤ high ≤ 1".into());
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.d)
            .map(|j| match j {
                0 => "severity".to_string(),
                1 => "elapsed".to_string(),
                j if j % 2 == 0 => format!("vital_{j}"),
                j => format!("noise_{j}"),
            })
            .collect()
    }

    pub fn intensity(&self, action: usize) -> f64 {
        action as f64 / (self.a - 1) as f64
    }

    /// The action whose intensity best matches `severity`.
    pub fn matched_action(&self, severity: f64) -> usize {
        ((severity.clamp(0.0, 1.0) * (self.a - 1) as f64).round() as usize).min(self.a - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Observed features; `features[0]` is the latent severity.
    pub features: Vec<f64>,
    /// Steps taken so far.
    pub step: usize,
    pub done: bool,
}

impl EnvState {
    pub fn severity(&self) -> f64 {
        self.features[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ongoing,
    Died,
    Discharged,
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: VectorReward<f64>,
    pub done: bool,
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
pub struct IcuEnv {
    cfg: EnvConfig,
}

impl IcuEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn observe<R: Rng + ?Sized>(&self, severity: f64, step: usize, rng: &mut R) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.cfg.d);
        f.push(severity);
        f.push(step as f64 / self.cfg.t_max as f64);
        for j in 2..self.cfg.d {
            let z: f64 = StandardNormal.sample(rng);
            f.push(if j % 2 == 0 { severity + 0.1 * z } else { z });
        }
        f
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let (lo, hi) = (self.cfg.initial_severity_low, self.cfg.initial_severity_high);
        let severity = if hi > lo { rng.random_range(lo..hi) } else { lo };
        EnvState {
            features: self.observe(severity, 0, rng),
            step: 0,
            done: false,
        }
    }

    /// Starts an episode at a chosen severity.
    pub fn reset_to<R: Rng + ?Sized>(&self, severity: f64, rng: &mut R) -> EnvState {
        EnvState {
            features: self.observe(severity.clamp(0.0, 1.0), 0, rng),
            step: 0,
            done: false,
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &EnvState, action: usize, rng: &mut R) -> Result<StepResult> {
        let c = &self.cfg;
        if state.done || state.step >= c.t_max {
            return Err(Error::Usage("cannot step a finished episode".into()));
        }
        if action >= c.a {
            return Err(Error::InvalidArgument(format!("action {action} out of range [0, {})", c.a)));
        }
        let x = c.intensity(action);
        let z: f64 = StandardNormal.sample(rng);
        let raw = state.severity() + c.severity_drift - c.treatment_effect * x + c.noise_std * z;
        let complication = rng.random::<f64>() < c.complication_rate * x * x * x;
        let step = state.step + 1;
        let outcome = if complication || raw >= 1.0 {
            Outcome::Died
        } else if raw <= 0.0 {
            Outcome::Discharged
        } else if step >= c.t_max {
            Outcome::Censored
        } else {
            Outcome::Ongoing
        };
        let done = outcome != Outcome::Ongoing;
        let reward = if done {
            let survived = if outcome == Outcome::Died { 0.0 } else { 1.0 };
            let los = (1.0 - step as f64 / c.t_max as f64).clamp(0.0, 1.0);
            VectorReward::new(survived, los)
        } else {
            VectorReward::zero()
        };
        let severity = raw.clamp(0.0, 1.0);
        Ok(StepResult {
            state: EnvState {
                features: self.observe(severity, step, rng),
                step,
                done,
            },
            reward,
            done,
            outcome,
        })
    }
}

/// The data-generating "clinician": ε-soft around the severity-matched
/// action.
#[derive(Debug, Clone)]
pub struct ClinicianPolicy {
    cfg: EnvConfig,
    epsilon: f64,
    severity_mean: f64,
    severity_std: f64,
}

impl ClinicianPolicy {
    pub fn new(cfg: &EnvConfig, epsilon: f64) -> Self {
        Self {
            cfg: cfg.clone(),
            epsilon,
            severity_mean: 0.0,
            severity_std: 1.0,
        }
    }

    /// Same policy acting on features normalized with `stats`.
    pub fn for_normalized<S: Scalar>(cfg: &EnvConfig, epsilon: f64, stats: &NormalizationStats<S>) -> Self {
        Self {
            cfg: cfg.clone(),
            epsilon,
            severity_mean: stats.mean[0].as_f64(),
            severity_std: stats.std[0].as_f64(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn probabilities_at(&self, severity: f64) -> Vec<f64> {
        let a = self.cfg.a;
        let mut p = vec![self.epsilon / a as f64; a];
        p[self.cfg.matched_action(severity)] += 1.0 - self.epsilon;
        p
    }

    /// Draws an action for a raw severity value.
    pub fn sample<R: Rng + ?Sized>(&self, severity: f64, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.epsilon {
            rng.random_range(0..self.cfg.a)
        } else {
            self.cfg.matched_action(severity)
        }
    }
}

impl<S: Scalar> Policy<S> for ClinicianPolicy {
    fn num_actions(&self) -> usize {
        self.cfg.a
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Behavior
    }

    fn action_probabilities(&self, history: &History<'_, S>) -> Vec<S> {
        let severity = history.current_state()[0].as_f64() * self.severity_std + self.severity_mean;
        self.probabilities_at(severity).into_iter().map(S::lit).collect()
    }
}

fn raw_trajectory<S: Scalar>(steps: Vec<(Vec<f64>, usize, VectorReward<f64>, bool)>, id: u64) -> Trajectory<S> {
    Trajectory {
        id,
        transitions: steps
            .into_iter()
            .enumerate()
            .map(|(i, (state, action, r, done))| Transition {
                state: state.into_iter().map(S::lit).collect(),
                action,
                reward: VectorReward::new(S::lit(r.mortality), S::lit(r.los)),
                done,
                t: i + 1,
            })
            .collect(),
    }
}

/// Rolls out one clinician episode.
pub fn clinician_episode<R: Rng + ?Sized>(
    env: &IcuEnv,
    clinician: &ClinicianPolicy,
    rng: &mut R,
) -> Result<Vec<(Vec<f64>, usize, VectorReward<f64>, bool)>> {
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    loop {
        let action = clinician.sample(state.severity(), rng);
        let res = env.step(&state, action, rng)?;
        steps.push((state.features.clone(), action, res.reward, res.done));
        if res.done {
            return Ok(steps);
        }
        state = res.state;
    }
}

/// Generates `episodes` clinician trajectories and normalizes the features.
pub fn generate_dataset<S: Scalar>(cfg: &EnvConfig, episodes: usize) -> Result<Dataset<S>> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    let env = IcuEnv::new(cfg.clone())?;
    let clinician = ClinicianPolicy::new(cfg, cfg.behavior_epsilon);
    let trajectories = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_indexed(cfg.seed, "episode", i as u64));
            clinician_episode(&env, &clinician, &mut rng).map(|steps| raw_trajectory(steps, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = Dataset::new(trajectories, cfg.feature_names(), cfg.a, NormalizationStats::identity(cfg.d))?;
    Ok(normalize_features(&raw))
}

/// Monte Carlo ground truth for a policy's value.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue {
    /// Mean of the scalarized discounted return.
    pub value: f64,
    pub std_error: f64,
    /// Per-objective means `[mortality, los]`.
    pub objective_values: [f64; 2],
    pub objective_std_errors: [f64; 2],
    pub mean_length: f64,
    pub survival_rate: f64,
    pub rollouts: usize,
}

fn sample_action<S: Scalar, R: Rng + ?Sized>(probs: &[S], rng: &mut R) -> usize {
    let u = S::lit(rng.random::<f64>());
    let mut acc = S::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Result of a single policy rollout.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub discounted: VectorReward<f64>,
    pub length: usize,
    pub outcome: Outcome,
}

/// Runs `policy` for one episode; features are normalized with `stats`
/// before the policy sees them.
pub fn rollout<S: Scalar, P: Policy<S> + ?Sized, R: Rng + ?Sized>(
    env: &IcuEnv,
    policy: &P,
    stats: &NormalizationStats<S>,
    gamma: f64,
    rng: &mut R,
) -> Result<Rollout> {
    let mut state = env.reset(rng);
    let mut states: Vec<Vec<S>> = Vec::new();
    let mut actions = Vec::new();
    let mut rewards: Vec<VectorReward<S>> = Vec::new();
    let mut discounted = VectorReward::zero();
    let mut discount = 1.0;
    loop {
        let raw: Vec<S> = state.features.iter().map(|&v| S::lit(v)).collect();
        states.push(stats.apply(&raw));
        let probs = policy.action_probabilities(&History::new(&states, &actions, &rewards));
        let action = sample_action(&probs, rng);
        let res = env.step(&state, action, rng)?;
        discounted.mortality += discount * res.reward.mortality;
        discounted.los += discount * res.reward.los;
        discount *= gamma;
        actions.push(action);
        rewards.push(VectorReward::new(S::lit(res.reward.mortality), S::lit(res.reward.los)));
        if res.done {
            return Ok(Rollout {
                discounted,
                length: res.state.step,
                outcome: res.outcome,
            });
        }
        state = res.state;
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    // Shifted by the first sample so identical samples average exactly.
    let shift = xs[0];
    let mean = shift + xs.iter().map(|x| x - shift).sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean scalarized discounted return over `rollouts` fresh episodes.
pub fn true_policy_value<S: Scalar, P: Policy<S> + ?Sized>(
    cfg: &EnvConfig,
    policy: &P,
    w: &PreferenceVector,
    gamma: f64,
    rollouts: usize,
    seed: u64,
    stats: &NormalizationStats<S>,
) -> Result<OracleValue> {
    if rollouts == 0 {
        return Err(Error::InvalidArgument("need at least one rollout".into()));
    }
    let env = IcuEnv::new(cfg.clone())?;
    let results = (0..rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_indexed(seed, "rollout", i as u64));
            rollout(&env, policy, stats, gamma, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let scalar: Vec<f64> = results.iter().map(|r| scalarize(r.discounted, w)).collect();
    let mort: Vec<f64> = results.iter().map(|r| r.discounted.mortality).collect();
    let los: Vec<f64> = results.iter().map(|r| r.discounted.los).collect();
    let (value, std_error) = mean_and_se(&scalar);
    let (m, m_se) = mean_and_se(&mort);
    let (l, l_se) = mean_and_se(&los);
    let n = rollouts as f64;
    Ok(OracleValue {
        value,
        std_error,
        objective_values: [m, l],
        objective_std_errors: [m_se, l_se],
        mean_length: results.iter().map(|r| r.length as f64).sum::<f64>() / n,
        survival_rate: results.iter().filter(|r| r.outcome != Outcome::Died).count() as f64 / n,
        rollouts,
    })
}

/// Empirical mean of the scalarized discounted return of a dataset.
pub fn empirical_value<S: Scalar>(data: &Dataset<S>, w: &PreferenceVector, gamma: f64) -> f64 {
    let g = S::lit(gamma);
    data.trajectories
        .iter()
        .map(|t| scalarize(discounted_return(t, g), w).as_f64())
        .sum::<f64>()
        / data.len() as f64
}
