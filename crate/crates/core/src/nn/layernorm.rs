use super::Parameters;
use crate::scalar::Scalar;

/// Per-token layer normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<S> {
    xhat: Vec<S>,
    inv_std: S,
}

impl<S: Scalar> LayerNorm<S> {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![S::one(); dim],
            beta: vec![S::zero(); dim],
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: vec![S::zero(); self.gamma.len()],
            beta: vec![S::zero(); self.beta.len()],
            eps: self.eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &[S], out: &mut [S]) -> LayerNormCache<S> {
        let n = S::from_usize_lossy(x.len());
        let mean = x.iter().copied().sum::<S>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
        let inv_std = S::one() / (var + S::lit(self.eps)).sqrt();
        let xhat: Vec<S> = x.iter().map(|&v| (v - mean) * inv_std).collect();
        for i in 0..x.len() {
            out[i] = self.gamma[i] * xhat[i] + self.beta[i];
        }
        LayerNormCache { xhat, inv_std }
    }

    /// Accumulates gain/shift gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, cache: &LayerNormCache<S>, dy: &[S], grad: &mut LayerNorm<S>) -> Vec<S> {
        let n = S::from_usize_lossy(dy.len());
        let mut dxhat = vec![S::zero(); dy.len()];
        let (mut sum_d, mut sum_dx) = (S::zero(), S::zero());
        for i in 0..dy.len() {
            grad.gamma[i] += dy[i] * cache.xhat[i];
            grad.beta[i] += dy[i];
            dxhat[i] = dy[i] * self.gamma[i];
            sum_d += dxhat[i];
            sum_dx += dxhat[i] * cache.xhat[i];
        }
        dxhat
            .iter()
            .zip(&cache.xhat)
            .map(|(&d, &xh)| cache.inv_std * (n * d - sum_d - xh * sum_dx) / n)
            .collect()
    }
}

impl<S: Scalar> Parameters<S> for LayerNorm<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        vec![&self.gamma, &self.beta]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
