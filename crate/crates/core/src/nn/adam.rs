use super::Parameters;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments shaped like a model's parameter slices.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<P: Parameters<S>>(params: &P, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    /// Applies one update `θ ← θ − lr · m̂ / (√v̂ + ε)` in place.
    pub fn step<P: Parameters<S>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut slices = params.param_slices_mut();
        let grad_slices = grads.param_slices();
        if slices.len() != self.first.len() || grad_slices.len() != slices.len() {
            return Err(Error::Shape("Adam state, parameters and gradients disagree".into()));
        }
        for ((p, g), m) in slices.iter().zip(&grad_slices).zip(&self.first) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape("Adam parameter slice length mismatch".into()));
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let one = S::one();
        let bias1 = one - S::lit(c.beta1.powi(self.step as i32));
        let bias2 = one - S::lit(c.beta2.powi(self.step as i32));
        let lr = S::lit(c.learning_rate);
        let eps = S::lit(c.epsilon);
        for (((p, g), m), v) in slices
            .iter_mut()
            .zip(&grad_slices)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn moments_finite(&self) -> bool {
        self.first
            .iter()
            .chain(&self.second)
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}
