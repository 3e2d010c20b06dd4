//! Off-policy evaluation: behavior estimation, weighted importance sampling,
//! fitted Q evaluation and bootstrap intervals.

mod behavior;
mod bootstrap;
mod fqe;
mod wis;

pub use behavior::{fit_behavior, BehaviorModel, DEFAULT_P_MIN};
pub use bootstrap::{bootstrap_ci, quantile, Interval, Metric, OpeEstimate, DEFAULT_BOOTSTRAP};
pub use fqe::{fqe, FqeConfig, FqeResult};
pub use wis::{wis, wis_inputs, RatioTrace, WisInputs, DEFAULT_RHO_CLIP};

use crate::error::Result;
use crate::mdp::{Dataset, PreferenceVector};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// WIS estimate with a percentile bootstrap over episodes.
#[allow(clippy::too_many_arguments)]
pub fn wis_estimate<S, P, B>(
    policy: &P,
    data: &Dataset<S>,
    behavior: &B,
    w: &PreferenceVector,
    gamma: f64,
    rho_clip: Option<f64>,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<OpeEstimate>
where
    S: Scalar,
    P: Policy<S> + ?Sized,
    B: Policy<S> + ?Sized,
{
    let (inputs, _) = wis_inputs(policy, data, behavior, w, gamma, rho_clip)?;
    let ci = bootstrap_ci(|idx| inputs.estimate(idx), inputs.len(), replicates, level, seed)?;
    Ok(OpeEstimate {
        value: ci.value,
        ci_lower: ci.lower,
        ci_upper: ci.upper,
        n_bootstrap: replicates,
        metric: Metric::Wis,
        preference: *w,
    })
}

/// FQE estimate; the interval resamples the per-episode initial-state
/// terms of one fitted Q-function.
#[allow(clippy::too_many_arguments)]
pub fn fqe_estimate<S, P>(
    policy: &P,
    data: &Dataset<S>,
    w: &PreferenceVector,
    gamma: f64,
    cfg: &FqeConfig,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<OpeEstimate>
where
    S: Scalar,
    P: Policy<S> + ?Sized,
{
    let fit = fqe(policy, data, w, gamma, cfg)?;
    let terms = &fit.initial_terms;
    let mean = |idx: &[usize]| Ok(idx.iter().map(|&i| terms[i]).sum::<f64>() / idx.len() as f64);
    let ci = bootstrap_ci(mean, terms.len(), replicates, level, seed)?;
    Ok(OpeEstimate {
        value: fit.value,
        ci_lower: ci.lower.min(fit.value),
        ci_upper: ci.upper.max(fit.value),
        n_bootstrap: replicates,
        metric: Metric::Fqe,
        preference: *w,
    })
}
