use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{discounted_return, scalarize, Dataset, PreferenceVector};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// Default clipping bound for per-step importance ratios.
pub const DEFAULT_RHO_CLIP: f64 = 20.0;

/// Per-episode importance ratios and their normalizers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioTrace {
    /// `ρ_t` for every step of every episode.
    pub rho: Vec<Vec<f64>>,
    /// `ρ_{1:t}` for every step of every episode.
    pub cumulative: Vec<Vec<f64>>,
    /// `w_t` for `t = 1..=max T`; episodes shorter than `t` contribute
    /// their final `ρ_{1:T}`.
    pub w: Vec<f64>,
    /// Scalarized discounted return of every episode.
    pub returns: Vec<f64>,
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    episode_id: u64,
    rho: &'a [f64],
    cumulative: &'a [f64],
    discounted_return: f64,
}

impl RatioTrace {
    /// Writes one JSON line per episode.
    pub fn write_lines<W: Write>(&self, ids: &[u64], mut out: W) -> Result<()> {
        for (i, id) in ids.iter().enumerate() {
            let rec = TraceRecord {
                episode_id: *id,
                rho: &self.rho[i],
                cumulative: &self.cumulative[i],
                discounted_return: self.returns[i],
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Cumulative ratios and returns of each episode; the estimator can be
/// recomputed on any multiset of episodes.
#[derive(Debug, Clone)]
pub struct WisInputs {
    pub cumulative: Vec<Vec<f64>>,
    pub returns: Vec<f64>,
}

impl WisInputs {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Estimator over the episodes `idx` (repeats allowed).
    pub fn estimate(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.estimate_with_weights(idx)?.0)
    }

    fn estimate_with_weights(&self, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
        if idx.is_empty() {
            return Err(Error::InvalidArgument("WIS needs at least one episode".into()));
        }
        let horizon = idx.iter().map(|&i| self.cumulative[i].len()).max().unwrap_or(0);
        let n = idx.len() as f64;
        let mut w = vec![0.0; horizon];
        for &i in idx {
            let c = &self.cumulative[i];
            let last = *c.last().ok_or_else(|| Error::InvalidArgument("empty episode".into()))?;
            for (t, wt) in w.iter_mut().enumerate() {
                *wt += c.get(t).copied().unwrap_or(last);
            }
        }
        w.iter_mut().for_each(|v| *v /= n);
        let mut total = 0.0;
        for &i in idx {
            let c = &self.cumulative[i];
            let t = c.len() - 1;
            if !(w[t] > 0.0) {
                return Err(Error::DegenerateWeights(format!("w_{} = {}", t + 1, w[t])));
            }
            total += c[t] / w[t] * self.returns[i];
        }
        Ok((total / n, w))
    }
}

fn clip(rho: f64, bound: Option<f64>) -> f64 {
    match bound {
        Some(c) => rho.clamp(1.0 / c, c),
        None => rho,
    }
}

/// Ratios and returns for `policy` against `behavior` on `data`.
pub fn wis_inputs<S, P, B>(
    policy: &P,
    data: &Dataset<S>,
    behavior: &B,
    w: &PreferenceVector,
    gamma: f64,
    rho_clip: Option<f64>,
) -> Result<(WisInputs, Vec<Vec<f64>>)>
where
    S: Scalar,
    P: Policy<S> + ?Sized,
    B: Policy<S> + ?Sized,
{
    if let Some(c) = rho_clip {
        if !(c >= 1.0) {
            return Err(Error::InvalidArgument(format!("rho_clip must be ≥ 1, got {c}")));
        }
    }
    if policy.num_actions() != data.num_actions || behavior.num_actions() != data.num_actions {
        return Err(Error::Shape("policy action count differs from the dataset".into()));
    }
    let g = S::lit(gamma);
    let per_episode: Vec<(Vec<f64>, Vec<f64>, f64)> = data
        .trajectories
        .par_iter()
        .map(|traj| {
            let pi = policy.episode_probabilities(traj);
            let pb = behavior.episode_probabilities(traj);
            let mut rho = Vec::with_capacity(traj.transitions.len());
            let mut cumulative = Vec::with_capacity(traj.transitions.len());
            let mut acc = 1.0;
            for (t, tr) in traj.transitions.iter().enumerate() {
                let num = pi[t][tr.action].as_f64();
                let den = pb[t][tr.action].as_f64();
                if !(den > 0.0) {
                    return Err(Error::DegenerateWeights(format!(
                        "behavior probability of logged action is {den} in episode {}",
                        traj.id
                    )));
                }
                let r = clip(num / den, rho_clip);
                acc *= r;
                rho.push(r);
                cumulative.push(acc);
            }
            Ok((rho, cumulative, scalarize(discounted_return(traj, g), w).as_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rho = Vec::with_capacity(per_episode.len());
    let mut cumulative = Vec::with_capacity(per_episode.len());
    let mut returns = Vec::with_capacity(per_episode.len());
    for (r, c, g) in per_episode {
        rho.push(r);
        cumulative.push(c);
        returns.push(g);
    }
    Ok((WisInputs { cumulative, returns }, rho))
}

/// Weighted importance sampling estimate
/// `(1/N) Σ_n ρ_{1:T_n} / w_{T_n} · Σ_t γ^{t−1} r_t` and its ratio trace.
pub fn wis<S, P, B>(
    policy: &P,
    data: &Dataset<S>,
    behavior: &B,
    w: &PreferenceVector,
    gamma: f64,
    rho_clip: Option<f64>,
) -> Result<(f64, RatioTrace)>
where
    S: Scalar,
    P: Policy<S> + ?Sized,
    B: Policy<S> + ?Sized,
{
    let (inputs, rho) = wis_inputs(policy, data, behavior, w, gamma, rho_clip)?;
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let (value, weights) = inputs.estimate_with_weights(&idx)?;
    Ok((
        value,
        RatioTrace { rho, cumulative: inputs.cumulative, w: weights, returns: inputs.returns },
    ))
}
