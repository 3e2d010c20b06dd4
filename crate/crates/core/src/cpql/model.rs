use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{PreferenceVector, NUM_OBJECTIVES};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Activation, Dense, Matrix, Mlp, MlpTape, Parameters};
use crate::scalar::Scalar;

/// How the preference enters the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `[state, ω]` is the network input.
    Concat,
    /// The network sees the state only; a gate network maps ω to gains in
    /// `(0, 2)` that scale the first hidden layer.
    PreferenceAttention,
}

impl Conditioning {
    pub fn tag(self) -> &'static str {
        match self {
            Conditioning::Concat => "concat",
            Conditioning::PreferenceAttention => "preference_attention",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "concat" => Some(Conditioning::Concat),
            "preference_attention" => Some(Conditioning::PreferenceAttention),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Network<S> {
    Concat(Mlp<S>),
    Attention { first: Dense<S>, rest: Mlp<S>, gate: Mlp<S> },
}

/// Preference-conditioned vector Q-network with `A × K` outputs.
///
/// Output `a·K + k` is the value of action `a` on objective `k`. With
/// `K = 1` the single objective is the ω-scalarized reward.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorQModel<S> {
    network: Network<S>,
    activation: Activation,
    state_dim: usize,
    num_actions: usize,
    num_objectives: usize,
}

pub(crate) enum Tape<S> {
    Concat { tape: MlpTape<S> },
    Attention {
        input: Matrix<S>,
        z1: Matrix<S>,
        a1: Matrix<S>,
        gains: Matrix<S>,
        gate_tape: MlpTape<S>,
        rest_tape: MlpTape<S>,
    },
}

impl<S: Scalar> Tape<S> {
    pub(crate) fn output(&self) -> &Matrix<S> {
        match self {
            Tape::Concat { tape, .. } => tape.output(),
            Tape::Attention { rest_tape, .. } => rest_tape.output(),
        }
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

fn preference_matrix<S: Scalar>(prefs: &[PreferenceVector]) -> Matrix<S> {
    let data = prefs
        .iter()
        .flat_map(|w| w.weights::<S>())
        .collect();
    Matrix::from_vec(prefs.len(), NUM_OBJECTIVES, data).expect("two weights per preference")
}

fn concat_columns<S: Scalar>(states: &Matrix<S>, prefs: &Matrix<S>) -> Matrix<S> {
    let cols = states.cols() + prefs.cols();
    let mut data = Vec::with_capacity(states.rows() * cols);
    for (s, w) in states.iter_rows().zip(prefs.iter_rows()) {
        data.extend_from_slice(s);
        data.extend_from_slice(w);
    }
    Matrix::from_vec(states.rows(), cols, data).expect("consistent widths")
}

impl<S: Scalar> VectorQModel<S> {
    /// Initializes the network from `rng`. The concat variant draws exactly
    /// the parameters of a plain MLP on `[state, ω]`.
    pub fn new<R: Rng + ?Sized>(
        conditioning: Conditioning,
        state_dim: usize,
        num_actions: usize,
        num_objectives: usize,
        hidden: &[usize],
        gate_hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if !(1..=NUM_OBJECTIVES).contains(&num_objectives) {
            return Err(Error::InvalidArgument(format!(
                "num_objectives must be 1 or {NUM_OBJECTIVES}, got {num_objectives}"
            )));
        }
        if num_actions == 0 || state_dim == 0 {
            return Err(Error::Shape("state_dim and num_actions must be positive".into()));
        }
        let out = num_actions * num_objectives;
        let network = match conditioning {
            Conditioning::Concat => {
                let mut dims = vec![state_dim + NUM_OBJECTIVES];
                dims.extend(hidden);
                dims.push(out);
                Network::Concat(Mlp::new(&dims, activation, rng)?)
            }
            Conditioning::PreferenceAttention => {
                let Some((&h1, more)) = hidden.split_first() else {
                    return Err(Error::Shape("preference attention needs a hidden layer".into()));
                };
                if gate_hidden == 0 {
                    return Err(Error::Shape("gate_hidden must be positive".into()));
                }
                let first = Dense::new(state_dim, h1, rng);
                let mut dims = vec![h1];
                dims.extend(more);
                dims.push(out);
                let rest = Mlp::new(&dims, activation, rng)?;
                let gate = Mlp::new(&[NUM_OBJECTIVES, gate_hidden, h1], Activation::Tanh, rng)?;
                Network::Attention { first, rest, gate }
            }
        };
        Ok(Self { network, activation, state_dim, num_actions, num_objectives })
    }

    pub fn conditioning(&self) -> Conditioning {
        match self.network {
            Network::Concat(_) => Conditioning::Concat,
            Network::Attention { .. } => Conditioning::PreferenceAttention,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_objectives(&self) -> usize {
        self.num_objectives
    }

    /// Weights that turn a Q-vector into a scalar value under `w`.
    pub fn objective_weights(&self, w: &PreferenceVector) -> Vec<S> {
        if self.num_objectives == 1 {
            vec![S::one()]
        } else {
            w.weights::<S>().to_vec()
        }
    }

    pub fn zeros_like(&self) -> Self {
        let network = match &self.network {
            Network::Concat(net) => Network::Concat(net.zeros_like()),
            Network::Attention { first, rest, gate } => Network::Attention {
                first: first.zeros_like(),
                rest: rest.zeros_like(),
                gate: gate.zeros_like(),
            },
        };
        Self { network, ..self.clone() }
    }

    /// First-hidden-layer gains for each preference (attention variant
    /// only).
    pub fn gate_gains(&self, prefs: &[PreferenceVector]) -> Option<Matrix<S>> {
        match &self.network {
            Network::Concat(_) => None,
            Network::Attention { gate, .. } => {
                let mut g = gate.forward(&preference_matrix(prefs)).ok()?;
                g.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = S::lit(2.0) * sigmoid(*v));
                Some(g)
            }
        }
    }

    fn check_batch(&self, states: &Matrix<S>, prefs: &[PreferenceVector]) -> Result<()> {
        if states.cols() != self.state_dim || states.rows() != prefs.len() {
            return Err(Error::Shape(format!(
                "expected states of width {} and one preference per row, got {}x{} states and {} preferences",
                self.state_dim,
                states.rows(),
                states.cols(),
                prefs.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_tape(&self, states: &Matrix<S>, prefs: &[PreferenceVector]) -> Result<Tape<S>> {
        self.check_batch(states, prefs)?;
        let w = preference_matrix(prefs);
        match &self.network {
            Network::Concat(net) => {
                let input = concat_columns(states, &w);
                Ok(Tape::Concat { tape: net.forward_tape(&input)? })
            }
            Network::Attention { first, rest, gate } => {
                let z1 = first.forward(states)?;
                let mut a1 = z1.clone();
                a1.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
                let gate_tape = gate.forward_tape(&w)?;
                let mut gains = gate_tape.output().clone();
                gains
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = S::lit(2.0) * sigmoid(*v));
                let mut h1 = a1.clone();
                for (h, &g) in h1.as_mut_slice().iter_mut().zip(gains.as_slice()) {
                    *h *= g;
                }
                let rest_tape = rest.forward_tape(&h1)?;
                Ok(Tape::Attention { input: states.clone(), z1, a1, gains, gate_tape, rest_tape })
            }
        }
    }

    /// Batched Q-vectors: row `i` holds `A × K` values for `(states[i], prefs[i])`.
    pub fn forward(&self, states: &Matrix<S>, prefs: &[PreferenceVector]) -> Result<Matrix<S>> {
        Ok(match self.forward_tape(states, prefs)? {
            Tape::Concat { tape, .. } => tape.output().clone(),
            Tape::Attention { rest_tape, .. } => rest_tape.output().clone(),
        })
    }

    /// `A × K` Q-values (row-major by action) for a single state.
    pub fn q_vectors(&self, state: &[S], w: &PreferenceVector) -> Vec<S> {
        let states = Matrix::from_vec(1, state.len(), state.to_vec()).expect("one row");
        self.forward(&states, &[*w]).expect("state width matches network").into_vec()
    }

    /// Per-action scalarized values `Σ_k ω_k Q_k(s, a; ω)`.
    pub fn scalarized(&self, q_row: &[S], weights: &[S]) -> Vec<S> {
        q_row
            .chunks(self.num_objectives)
            .map(|q| q.iter().zip(weights).map(|(&v, &w)| v * w).sum())
            .collect()
    }

    pub(crate) fn backward(&self, tape: &Tape<S>, d_out: &Matrix<S>, grad: &mut Self) -> Result<()> {
        match (&self.network, tape, &mut grad.network) {
            (Network::Concat(net), Tape::Concat { tape, .. }, Network::Concat(g)) => {
                net.backward(tape, d_out, g)?;
            }
            (
                Network::Attention { first, rest, gate },
                Tape::Attention { input, z1, a1, gains, gate_tape, rest_tape },
                Network::Attention { first: g_first, rest: g_rest, gate: g_gate },
            ) => {
                let d_h1 = rest.backward(rest_tape, d_out, g_rest)?;
                let mut d_gate = d_h1.clone();
                let mut d_z1 = d_h1;
                let two = S::lit(2.0);
                for i in 0..d_z1.as_slice().len() {
                    let g = gains.as_slice()[i];
                    let a = a1.as_slice()[i];
                    let dh = d_z1.as_slice()[i];
                    d_gate.as_mut_slice()[i] = dh * a * g * (S::one() - g / two);
                    d_z1.as_mut_slice()[i] = dh * g * self.activation.derivative(z1.as_slice()[i], a);
                }
                gate.backward(gate_tape, &d_gate, g_gate)?;
                first.backward(input, &d_z1, g_first);
            }
            _ => return Err(Error::Shape("gradient buffer does not match network".into())),
        }
        Ok(())
    }

    /// Parameter gradient of `Σ d_out ⊙ forward(states, prefs)`.
    pub fn output_gradient(&self, states: &Matrix<S>, prefs: &[PreferenceVector], d_out: &Matrix<S>) -> Result<Self> {
        let tape = self.forward_tape(states, prefs)?;
        let mut grad = self.zeros_like();
        self.backward(&tape, d_out, &mut grad)?;
        Ok(grad)
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.set_meta("variant", self.conditioning().tag())
            .set_meta("state_dim", self.state_dim)
            .set_meta("num_actions", self.num_actions)
            .set_meta("num_objectives", self.num_objectives)
            .set_meta("activation", self.activation.tag());
        match &self.network {
            Network::Concat(net) => ck.push_mlp("backbone", net),
            Network::Attention { first, rest, gate } => {
                ck.push_dense("first", first);
                ck.push_mlp("rest", rest);
                ck.push_mlp("gate", gate);
            }
        }
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let variant = ck.meta_str("variant")?;
        let conditioning = Conditioning::from_tag(variant)
            .ok_or_else(|| Error::Checkpoint(format!("unknown variant {variant:?}")))?;
        let activation = Activation::from_tag(ck.meta_str("activation")?)
            .ok_or_else(|| Error::Checkpoint("unknown activation".into()))?;
        let state_dim = ck.meta_usize("state_dim")?;
        let num_actions = ck.meta_usize("num_actions")?;
        let num_objectives = ck.meta_usize("num_objectives")?;
        let network = match conditioning {
            Conditioning::Concat => Network::Concat(ck.mlp("backbone")?),
            Conditioning::PreferenceAttention => {
                let rest: Mlp<S> = ck.mlp("rest")?;
                Network::Attention {
                    first: ck.dense("first", state_dim, rest.input_dim())?,
                    rest,
                    gate: ck.mlp("gate")?,
                }
            }
        };
        Ok(Self { network, activation, state_dim, num_actions, num_objectives })
    }
}

impl<S: Scalar> Parameters<S> for VectorQModel<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        match &self.network {
            Network::Concat(net) => net.param_slices(),
            Network::Attention { first, rest, gate } => {
                let mut v = first.param_slices();
                v.extend(rest.param_slices());
                v.extend(gate.param_slices());
                v
            }
        }
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        match &mut self.network {
            Network::Concat(net) => net.param_slices_mut(),
            Network::Attention { first, rest, gate } => {
                let mut v = first.param_slices_mut();
                v.extend(rest.param_slices_mut());
                v.extend(gate.param_slices_mut());
                v
            }
        }
    }
}
