//! Softmax-family helpers and the losses the learners regress on.

use crate::scalar::Scalar;

/// Numerically stable `ln Σ exp(x_i)`.
pub fn logsumexp<S: Scalar>(x: &[S]) -> S {
    let m = x.iter().copied().fold(S::neg_infinity(), S::max);
    if !m.is_finite() {
        return m;
    }
    let s: S = x.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let m = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out: Vec<S> = logits.iter().map(|&v| (v - m).exp()).collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Cross-entropy of `softmax(logits)` against class `target`, with gradient
/// `softmax(logits) − onehot(target)`.
pub fn softmax_cross_entropy<S: Scalar>(logits: &[S], target: usize) -> (S, Vec<S>) {
    assert!(target < logits.len(), "target {target} out of range");
    let lse = logsumexp(logits);
    let loss = lse - logits[target];
    let mut grad: Vec<S> = logits.iter().map(|&v| (v - lse).exp()).collect();
    grad[target] -= S::one();
    (loss, grad)
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax<S: Scalar>(x: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        for a in [2usize, 5, 9] {
            let (loss, grad) = softmax_cross_entropy(&vec![0.3f64; a], 1);
            assert!((loss - (a as f64).ln()).abs() < 1e-12);
            assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_decreases_as_target_logit_grows() {
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let (loss, _) = softmax_cross_entropy(&[0.0, k as f64, 1.0], 1);
            assert!(loss < prev);
            assert!(loss >= 0.0);
            prev = loss;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn fixture_logits() {
        // ln(e^1 + e^2 + e^3) − 3 = ln(1 + e^-1 + e^-2)
        let (loss, grad) = softmax_cross_entropy(&[1.0f64, 2.0, 3.0], 2);
        let expect = (1.0 + (-1.0f64).exp() + (-2.0f64).exp()).ln();
        assert!((loss - expect).abs() < 1e-14);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        assert!((grad[0] - 1f64.exp() / z).abs() < 1e-14);
        assert!((grad[2] - (3f64.exp() / z - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn stable_for_large_logits() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0f64, 0.0], 0);
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(xs in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&xs);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            prop_assert!(logsumexp(&xs) >= xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}
