//! Versioned flat checkpoint records.
//!
//! A checkpoint is one JSON document: a model tag, a flat metadata map and
//! an ordered list of named parameter arrays. Values are written with
//! shortest round-trip formatting, so save → load → save is byte-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Activation, Dense, LayerNorm, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "icu-morl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub metadata: BTreeMap<String, Value>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.into(),
            metadata: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn expect_model(&self, model: &str) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.model != model {
            return Err(Error::Checkpoint(format!(
                "expected a {model} checkpoint, found {}",
                self.model
            )));
        }
        Ok(())
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&Value> {
        self.metadata
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("metadata `{key}` is not an integer")))
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.meta(key)?
            .as_f64()
            .ok_or_else(|| Error::Checkpoint(format!("metadata `{key}` is not a number")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta(key)?
            .as_str()
            .ok_or_else(|| Error::Checkpoint(format!("metadata `{key}` is not a string")))
    }

    pub fn meta_bool(&self, key: &str) -> Result<bool> {
        self.meta(key)?
            .as_bool()
            .ok_or_else(|| Error::Checkpoint(format!("metadata `{key}` is not a boolean")))
    }

    pub fn meta_usizes(&self, key: &str) -> Result<Vec<usize>> {
        self.meta(key)?
            .as_array()
            .and_then(|a| a.iter().map(|v| v.as_u64().map(|x| x as usize)).collect())
            .ok_or_else(|| Error::Checkpoint(format!("metadata `{key}` is not an integer list")))
    }

    pub fn push_tensor<S: Scalar>(&mut self, name: impl Into<String>, shape: Vec<usize>, data: &[S]) {
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data: data.iter().map(|v| v.as_f64()).collect(),
        });
    }

    pub fn tensor<S: Scalar>(&self, name: &str, len: usize) -> Result<Vec<S>> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if t.data.len() != len || t.shape.iter().product::<usize>() != len {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has {} values, expected {len}",
                t.data.len()
            )));
        }
        Ok(t.data.iter().map(|&v| S::lit(v)).collect())
    }

    pub fn push_dense<S: Scalar>(&mut self, prefix: &str, layer: &Dense<S>) {
        self.push_tensor(format!("{prefix}.weight"), vec![layer.out_dim, layer.in_dim], &layer.weight);
        self.push_tensor(format!("{prefix}.bias"), vec![layer.out_dim], &layer.bias);
    }

    pub fn dense<S: Scalar>(&self, prefix: &str, in_dim: usize, out_dim: usize) -> Result<Dense<S>> {
        Ok(Dense {
            in_dim,
            out_dim,
            weight: self.tensor(&format!("{prefix}.weight"), in_dim * out_dim)?,
            bias: self.tensor(&format!("{prefix}.bias"), out_dim)?,
        })
    }

    pub fn push_layer_norm<S: Scalar>(&mut self, prefix: &str, ln: &LayerNorm<S>) {
        self.push_tensor(format!("{prefix}.gamma"), vec![ln.dim()], &ln.gamma);
        self.push_tensor(format!("{prefix}.beta"), vec![ln.dim()], &ln.beta);
    }

    pub fn layer_norm<S: Scalar>(&self, prefix: &str, dim: usize) -> Result<LayerNorm<S>> {
        Ok(LayerNorm {
            gamma: self.tensor(&format!("{prefix}.gamma"), dim)?,
            beta: self.tensor(&format!("{prefix}.beta"), dim)?,
            eps: LayerNorm::<S>::DEFAULT_EPS,
        })
    }

    /// Stores an MLP's dims and activation as `{prefix}.layer_dims` /
    /// `{prefix}.activation` metadata plus one weight/bias pair per layer.
    pub fn push_mlp<S: Scalar>(&mut self, prefix: &str, mlp: &Mlp<S>) {
        self.set_meta(&format!("{prefix}.layer_dims"), mlp.layer_dims());
        self.set_meta(&format!("{prefix}.activation"), mlp.activation.tag());
        for (i, layer) in mlp.layers.iter().enumerate() {
            self.push_dense(&format!("{prefix}.layer{i}"), layer);
        }
    }

    pub fn mlp<S: Scalar>(&self, prefix: &str) -> Result<Mlp<S>> {
        let dims = self.meta_usizes(&format!("{prefix}.layer_dims"))?;
        let tag = self.meta_str(&format!("{prefix}.activation"))?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation `{tag}`")))?;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.dense(&format!("{prefix}.layer{i}"), w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers, activation)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Standalone MLP checkpoint (`model = "mlp"`).
pub fn mlp_checkpoint<S: Scalar>(mlp: &Mlp<S>) -> Checkpoint {
    let mut ck = Checkpoint::new("mlp");
    ck.push_mlp("net", mlp);
    ck
}

pub fn mlp_from_checkpoint<S: Scalar>(ck: &Checkpoint) -> Result<Mlp<S>> {
    ck.expect_model("mlp")?;
    ck.mlp("net")
}
