//! Minimal dense-network substrate: affine layers, MLPs, layer norm,
//! losses, Adam, finite-difference checks and checkpoints.

mod activation;
mod adam;
pub mod checkpoint;
mod dense;
pub mod gradcheck;
mod layernorm;
pub mod loss;
mod matrix;
mod mlp;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use dense::Dense;
pub use layernorm::{LayerNorm, LayerNormCache};
pub use matrix::Matrix;
pub use mlp::{Mlp, MlpTape};

use crate::scalar::Scalar;

/// A model whose trainable parameters can be visited as flat slices.
///
/// Gradient buffers are values of the same type, so the slices of a model
/// and of its gradient line up one-to-one.
pub trait Parameters<S: Scalar> {
    fn param_slices(&self) -> Vec<&[S]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [S]>;

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn zero_(&mut self) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    fn scale_(&mut self, factor: S) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Copies parameters from a model of identical structure.
    fn copy_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            dst.copy_from_slice(src);
        }
    }
}
