use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    pub fn derivative<S: Scalar>(self, z: S, y: S) -> S {
        match self {
            Activation::Relu => {
                if z > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - y * y,
            Activation::Identity => S::one(),
        }
    }

    pub fn apply_slice<S: Scalar>(self, z: &[S]) -> Vec<S> {
        z.iter().map(|&v| self.apply(v)).collect()
    }

    /// `dz = dy * f'(z)`, element-wise.
    pub fn backward_slice<S: Scalar>(self, z: &[S], y: &[S], dy: &[S]) -> Vec<S> {
        z.iter()
            .zip(y)
            .zip(dy)
            .map(|((&zi, &yi), &g)| g * self.derivative(zi, yi))
            .collect()
    }
}
