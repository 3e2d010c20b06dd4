use rand::seq::SliceRandom;

use super::{Dataset, NormalizationStats};
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::scalar::Scalar;

/// Episode-level train/test split. Returns `(train, test)`.
pub fn split_dataset<S: Scalar>(
    dataset: &Dataset<S>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} episodes at fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived_rng(seed, &["split"]));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (traj, &t) in dataset.trajectories.iter().zip(&is_test) {
        if t {
            test.push(traj.clone());
        } else {
            train.push(traj.clone());
        }
    }
    Ok((dataset.with_trajectories(train)?, dataset.with_trajectories(test)?))
}

/// Standardizes every feature over all transitions and records the stats.
///
/// The dataset's existing stats are composed with the new ones, so the
/// recorded stats always map raw features to the stored values. Constant
/// columns map to 0 with a recorded standard deviation of 1.
pub fn normalize_features<S: Scalar>(dataset: &Dataset<S>) -> Dataset<S> {
    let d = dataset.state_dim();
    let count = S::from_usize_lossy(dataset.num_transitions());
    let mut mean = vec![S::zero(); d];
    for tr in dataset.trajectories.iter().flat_map(|t| &t.transitions) {
        for (m, &x) in mean.iter_mut().zip(&tr.state) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![S::zero(); d];
    for tr in dataset.trajectories.iter().flat_map(|t| &t.transitions) {
        for ((v, &x), &m) in var.iter_mut().zip(&tr.state).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<S> = var
        .iter()
        .map(|&v| {
            let s = (v / count).sqrt();
            if s > S::lit(1e-12) {
                s
            } else {
                S::one()
            }
        })
        .collect();
    let local = NormalizationStats { mean, std };

    let mut out = dataset.clone();
    for tr in out.trajectories.iter_mut().flat_map(|t| t.transitions.iter_mut()) {
        tr.state = local.apply(&tr.state);
    }
    // raw = z_old * s_old + m_old and z_old = z_new * s_loc + m_loc.
    let prev = &dataset.normalization;
    out.normalization = NormalizationStats {
        mean: (0..d).map(|j| local.mean[j] * prev.std[j] + prev.mean[j]).collect(),
        std: (0..d).map(|j| local.std[j] * prev.std[j]).collect(),
    };
    out
}

/// Re-expresses the features under `stats`, e.g. to feed fresh data to a
/// model fitted on another dataset's normalization.
pub fn renormalize<S: Scalar>(dataset: &Dataset<S>, stats: &NormalizationStats<S>) -> Dataset<S> {
    let mut out = dataset.clone();
    for tr in out.trajectories.iter_mut().flat_map(|t| t.transitions.iter_mut()) {
        tr.state = stats.apply(&dataset.normalization.invert(&tr.state));
    }
    out.normalization = stats.clone();
    out
}
