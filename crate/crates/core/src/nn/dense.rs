use rand::Rng;

use super::{Matrix, Parameters};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, Scalar};

/// Affine layer `y = W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Dense<S> {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| S::lit(rng.random_range(-bound..bound)))
            .collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias: vec![S::zero(); out_dim],
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![S::zero(); in_dim * out_dim],
            bias: vec![S::zero(); out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.out_dim)
    }

    pub fn weight_row(&self, o: usize) -> &[S] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    /// Single-vector forward pass.
    pub fn forward_one(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (o, y) in out.iter_mut().enumerate() {
            *y = self.bias[o] + dot(self.weight_row(o), x);
        }
    }

    pub fn forward(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        if x.cols() != self.in_dim {
            return Err(Error::Shape(format!(
                "dense layer expects width {}, got {}",
                self.in_dim,
                x.cols()
            )));
        }
        let mut y = Matrix::zeros(x.rows(), self.out_dim);
        for r in 0..x.rows() {
            self.forward_one(x.row(r), y.row_mut(r));
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad` for a single row and
    /// adds the input gradient into `dx` when given.
    pub fn backward_one(&self, x: &[S], dy: &[S], grad: &mut Dense<S>, dx: Option<&mut [S]>) {
        let n = self.in_dim;
        for (o, &g) in dy.iter().enumerate() {
            if g == S::zero() {
                continue;
            }
            grad.bias[o] += g;
            axpy(g, x, &mut grad.weight[o * n..(o + 1) * n]);
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g != S::zero() {
                    axpy(g, self.weight_row(o), dx);
                }
            }
        }
    }

    /// Batch backward pass returning the input gradient.
    pub fn backward(&self, x: &Matrix<S>, dy: &Matrix<S>, grad: &mut Dense<S>) -> Matrix<S> {
        let mut dx = Matrix::zeros(x.rows(), self.in_dim);
        for r in 0..x.rows() {
            self.backward_one(x.row(r), dy.row(r), grad, Some(dx.row_mut(r)));
        }
        dx
    }
}

impl<S: Scalar> Parameters<S> for Dense<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        vec![&self.weight, &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        vec![&mut self.weight, &mut self.bias]
    }
}
