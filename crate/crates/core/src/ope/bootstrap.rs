use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::PreferenceVector;
use crate::rng::{derive_indexed, derive_seed, rng_from_seed};

/// Default number of bootstrap resamples.
pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wis,
    Fqe,
}

impl Metric {
    pub fn tag(self) -> &'static str {
        match self {
            Metric::Wis => "wis",
            Metric::Fqe => "fqe",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "wis" => Some(Metric::Wis),
            "fqe" => Some(Metric::Fqe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeEstimate {
    pub value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_bootstrap: usize,
    pub metric: Metric,
    pub preference: PreferenceVector,
}

impl OpeEstimate {
    pub fn ci_width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }
}

/// Bootstrap interval around `estimator` evaluated on all `n` items.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Successful resample estimates, in resample order.
    pub replicates: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap over `n` items resampled with replacement.
///
/// Resample `b` draws from its own seed, so the result does not depend on
/// scheduling. A failing resample is redrawn; at most `3·B` draws are made
/// in total. The interval is widened to contain the full-data estimate when
/// the percentiles exclude it.
pub fn bootstrap_ci<F>(estimator: F, n: usize, replicates: usize, level: f64, seed: u64) -> Result<Interval>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if replicates < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 bootstrap resamples, got {replicates}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot bootstrap zero items".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let value = estimator(&all)?;
    let first: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| estimator(&resample(n, derive_indexed(seed, "bootstrap", b as u64))).ok())
        .collect();
    let mut draws = replicates;
    let mut values = Vec::with_capacity(replicates);
    for (b, v) in first.into_iter().enumerate() {
        let mut v = v;
        let mut attempt = 1u64;
        while v.is_none() {
            if draws >= 3 * replicates {
                return Err(Error::Bootstrap(format!("estimator failed on too many resamples ({draws} draws)")));
            }
            draws += 1;
            let s = derive_seed(seed, &["bootstrap-retry", &b.to_string(), &attempt.to_string()]);
            v = estimator(&resample(n, s)).ok();
            attempt += 1;
        }
        values.push(v.unwrap_or_default());
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lower = quantile(&sorted, tail).min(value);
    let upper = quantile(&sorted, 1.0 - tail).max(value);
    Ok(Interval { value, lower, upper, replicates: values })
}
