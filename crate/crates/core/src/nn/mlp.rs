use rand::Rng;

use super::{Activation, Dense, Matrix, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Multilayer perceptron: hidden layers share one activation, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S> {
    pub layers: Vec<Dense<S>>,
    pub activation: Activation,
}

/// Intermediate values of a forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpTape<S> {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Matrix<S>>,
    /// Pre-activation output of each hidden layer.
    pre: Vec<Matrix<S>>,
    output: Matrix<S>,
}

impl<S: Scalar> MlpTape<S> {
    pub fn output(&self) -> &Matrix<S> {
        &self.output
    }
}

impl<S: Scalar> Mlp<S> {
    /// `dims = [input, hidden..., output]`; layers are initialized in order
    /// from `rng`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
        }
        let layers = dims.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Dense<S>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer widths {} -> {} are inconsistent",
                    w[0].out_dim, w[1].in_dim
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            activation: self.activation,
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects input width {}, got {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        self.check_input(x.cols())?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i < last {
                h.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    /// Forward pass on a single input vector.
    pub fn forward_one(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_input(x.len())?;
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![S::zero(); layer.out_dim];
            layer.forward_one(&h, &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = out;
        }
        Ok(h)
    }

    /// Forward pass that records what backward needs.
    pub fn forward_tape(&self, x: &Matrix<S>) -> Result<MlpTape<S>> {
        self.check_input(x.cols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            if i < last {
                let mut a = z.clone();
                a.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok(MlpTape { inputs, pre, output: h })
    }

    /// Reverse-mode pass: accumulates parameter gradients into `grad` and
    /// returns the gradient with respect to the network input.
    pub fn backward(&self, tape: &MlpTape<S>, d_output: &Matrix<S>, grad: &mut Mlp<S>) -> Result<Matrix<S>> {
        if d_output.rows() != tape.output.rows() || d_output.cols() != tape.output.cols() {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, forward output was {}x{}",
                d_output.rows(),
                d_output.cols(),
                tape.output.rows(),
                tape.output.cols()
            )));
        }
        if grad.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient buffer does not match network".into()));
        }
        let mut delta = d_output.clone();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                // delta is dL/d(activation output) of layer i; convert to dL/dz.
                let z = &tape.pre[i];
                let y = &tape.inputs[i + 1];
                for ((d, &zv), &yv) in delta
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z.as_slice())
                    .zip(y.as_slice())
                {
                    *d *= self.activation.derivative(zv, yv);
                }
            }
            delta = self.layers[i].backward(&tape.inputs[i], &delta, &mut grad.layers[i]);
        }
        Ok(delta)
    }
}

impl<S: Scalar> Parameters<S> for Mlp<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        self.layers.iter().flat_map(|l| l.param_slices()).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        self.layers.iter_mut().flat_map(|l| l.param_slices_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, GradCheck};
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::<f64>::new(&[3, 4, 2], Activation::Relu, &mut rng_from_seed(0)).unwrap();
        for p in net.param_slices_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = net.forward_one(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = Dense::<f64>::zeros(3, 3);
        for i in 0..3 {
            layer.weight[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_layers(vec![layer], Activation::Relu).unwrap();
        assert_eq!(net.forward_one(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn hand_computed_two_layer_forward() {
        // h = relu([[1,-1],[2,0.5]] x + [0.1,-0.2]); y = [3,-1] h + 0.5
        let l1: Dense<f64> = Dense {
            in_dim: 2,
            out_dim: 2,
            weight: vec![1.0, -1.0, 2.0, 0.5],
            bias: vec![0.1, -0.2],
        };
        let l2: Dense<f64> = Dense {
            in_dim: 2,
            out_dim: 1,
            weight: vec![3.0, -1.0],
            bias: vec![0.5],
        };
        let net = Mlp::from_layers(vec![l1, l2], Activation::Relu).unwrap();
        // x = [2, 1]: z1 = [1.1, 4.3], h = [1.1, 4.3], y = 3.3 - 4.3 + 0.5 = -0.5
        let y = net.forward_one(&[2.0, 1.0]).unwrap();
        assert!((y[0] - (-0.5)).abs() < 1e-12);
        // x = [-1, 1]: z1 = [-1.9, -1.7] -> relu 0, y = 0.5
        let y = net.forward_one(&[-1.0, 1.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-12);
        let tanh_net = Mlp::from_layers(net.layers.clone(), Activation::Tanh).unwrap();
        let y = tanh_net.forward_one(&[2.0, 1.0]).unwrap();
        let expect = 3.0 * 1.1f64.tanh() - 4.3f64.tanh() + 0.5;
        assert!((y[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let net = Mlp::<f64>::new(&[3, 2], Activation::Relu, &mut rng_from_seed(0)).unwrap();
        assert!(net.forward_one(&[1.0]).is_err());
        assert!(net.forward(&Matrix::zeros(2, 4)).is_err());
        let tape = net.forward_tape(&Matrix::zeros(2, 3)).unwrap();
        let mut g = net.zeros_like();
        assert!(net.backward(&tape, &Matrix::zeros(3, 2), &mut g).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradient() {
        let net = Mlp::<f64>::new(&[3, 5, 2], Activation::Tanh, &mut rng_from_seed(1)).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        let mut g = net.zeros_like();
        net.backward(&tape, &Matrix::zeros(2, 2), &mut g).unwrap();
        assert!(g.param_slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_net_weight_gradient_is_outer_product() {
        let net = Mlp::<f64>::new(&[3, 2], Activation::Relu, &mut rng_from_seed(2)).unwrap();
        let x = [0.7, -1.3, 2.1];
        let dy = [0.25, -2.0];
        let tape = net.forward_tape(&Matrix::from_rows(&[x]).unwrap()).unwrap();
        let mut g = net.zeros_like();
        net.backward(&tape, &Matrix::from_rows(&[dy]).unwrap(), &mut g).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g.layers[0].weight[o * 3 + i] - dy[o] * x[i]).abs() < 1e-15);
            }
            assert_eq!(g.layers[0].bias[o], dy[o]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (seed, act) in [(3, Activation::Tanh), (4, Activation::Relu)] {
            let mut rng = rng_from_seed(seed);
            let net = Mlp::<f64>::new(&[4, 6, 5, 3], act, &mut rng).unwrap();
            let x = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
            let target = [0.3, -0.2, 0.9];
            let loss = |n: &Mlp<f64>| {
                let y = n.forward(&x).unwrap();
                y.as_slice()
                    .chunks(3)
                    .map(|r| r.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .sum::<f64>()
            };
            let tape = net.forward_tape(&x).unwrap();
            let mut dy = tape.output().clone();
            for r in 0..3 {
                for c in 0..3 {
                    dy.set(r, c, 2.0 * (tape.output().get(r, c) - target[c]));
                }
            }
            let mut g = net.zeros_like();
            net.backward(&tape, &dy, &mut g).unwrap();
            let report: GradCheck = check_gradients(&net, &g, loss, 1e-5);
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }
}
