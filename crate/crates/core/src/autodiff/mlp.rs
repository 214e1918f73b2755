use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::{affine, sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

/// Shape of a fully connected network: `layer_sizes[0]` inputs through
/// `layer_sizes[last]` outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// An [`MlpSpec`] bound to its weights inside a [`ParamStore`].
///
/// Layer `k` owns `{prefix}.w{k}` of shape `(out, in)` and `{prefix}.b{k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers freshly initialized parameters: Glorot-uniform weights and
    /// zero biases.
    pub fn init(
        spec: MlpSpec,
        params: &mut ParamStore,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layer_count());
        for (k, pair) in spec.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = params.insert_glorot(format!("{prefix}.w{k}"), fan_out, fan_in, rng)?;
            let b = params.insert(format!("{prefix}.b{k}"), Tensor::zeros(&[fan_out]))?;
            layers.push((w, b));
        }
        Ok(Mlp { spec, layers })
    }

    /// Looks up existing parameters and checks their shapes against `spec`.
    pub fn bind(spec: MlpSpec, params: &ParamStore, prefix: &str) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layer_count());
        for (k, pair) in spec.layer_sizes.windows(2).enumerate() {
            let w = params.require(&format!("{prefix}.w{k}"))?;
            let b = params.require(&format!("{prefix}.b{k}"))?;
            if params.value(w).shape() != [pair[1], pair[0]] {
                return Err(Error::Shape(format!(
                    "layer {k} of `{prefix}`: weight shape {:?}, spec needs [{}, {}]",
                    params.value(w).shape(),
                    pair[1],
                    pair[0]
                )));
            }
            if params.value(b).shape() != [pair[1]] {
                return Err(Error::Shape(format!(
                    "layer {k} of `{prefix}`: bias shape {:?}, spec needs [{}]",
                    params.value(b).shape(),
                    pair[1]
                )));
            }
            layers.push((w, b));
        }
        Ok(Mlp { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// The last layer's `(weight, bias)`.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().unwrap()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "layer 0 expects {} inputs, got {len}",
                self.spec.input_dim()
            )));
        }
        Ok(())
    }

    fn check_params(&self, params: &ParamStore) -> Result<()> {
        for (k, (&(w, b), pair)) in self
            .layers
            .iter()
            .zip(self.spec.layer_sizes.windows(2))
            .enumerate()
        {
            if !params.contains(w)
                || !params.contains(b)
                || params.value(w).shape() != [pair[1], pair[0]]
                || params.value(b).len() != pair[1]
            {
                return Err(Error::Shape(format!(
                    "layer {k}: parameters do not match spec {:?}",
                    self.spec.layer_sizes
                )));
            }
        }
        Ok(())
    }

    /// Records the forward pass up to the final pre-activation.
    pub fn forward_logits(
        &self,
        params: &ParamStore,
        input: NodeId,
        tape: &mut Tape,
    ) -> Result<NodeId> {
        self.check_input(tape.value(input).len())?;
        self.check_params(params)?;
        let last = self.layers.len() - 1;
        let mut h = input;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.affine(params, w, b, h);
            if k < last {
                h = match self.spec.hidden_activation {
                    HiddenActivation::Tanh => tape.tanh(h),
                    HiddenActivation::Relu => tape.relu(h),
                };
            }
        }
        Ok(h)
    }

    /// Records the full forward pass, output activation included.
    pub fn forward(&self, params: &ParamStore, input: NodeId, tape: &mut Tape) -> Result<NodeId> {
        let z = self.forward_logits(params, input, tape)?;
        Ok(match self.spec.output_activation {
            OutputActivation::Identity => z,
            OutputActivation::Sigmoid => tape.sigmoid(z),
        })
    }

    /// Tape-free evaluation up to the final pre-activation. Uses the same
    /// kernels as the recorded path, so results are bit-identical.
    pub fn eval_logits(&self, params: &ParamStore, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        self.check_params(params)?;
        let last = self.layers.len() - 1;
        let mut h = input.to_vec();
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            h = affine(params.value(w).data(), params.value(b).data(), &h);
            if k < last {
                match self.spec.hidden_activation {
                    HiddenActivation::Tanh => h.iter_mut().for_each(|v| *v = v.tanh()),
                    HiddenActivation::Relu => h.iter_mut().for_each(|v| *v = v.max(0.0)),
                }
            }
        }
        Ok(h)
    }

    pub fn eval(&self, params: &ParamStore, input: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.eval_logits(params, input)?;
        if self.spec.output_activation == OutputActivation::Sigmoid {
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        Ok(z)
    }
}
