//! Central finite-difference gradient verification.
//!
//! Only the forward loss is evaluated here, so the check is independent of
//! any backward implementation it is used against.

use super::Parameters;
use crate::scalar::Scalar;

/// Denominator floor for the relative error, so exact zeros compare as 0.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// `(slice, index)` of the worst parameter.
    pub worst: (usize, usize),
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` against `(L(θ+h) − L(θ−h)) / 2h` for every parameter.
pub fn check_gradients<S, M, F>(model: &M, analytic: &M, loss: F, h: f64) -> GradCheck
where
    S: Scalar,
    M: Parameters<S> + Clone,
    F: Fn(&M) -> f64,
{
    let mut probe = model.clone();
    let grads: Vec<Vec<f64>> = analytic
        .param_slices()
        .iter()
        .map(|s| s.iter().map(|v| v.as_f64()).collect())
        .collect();
    let sizes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (k, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let orig = probe.param_slices()[k][i];
            probe.param_slices_mut()[k][i] = orig + S::lit(h);
            let up = loss(&probe);
            probe.param_slices_mut()[k][i] = orig - S::lit(h);
            let down = loss(&probe);
            probe.param_slices_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grads[k][i];
            let rel = relative_error(a, numeric);
            report.max_absolute_error = report.max_absolute_error.max((a - numeric).abs());
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (k, i);
            }
            report.checked += 1;
        }
    }
    report
}
