//! Fully connected networks with hand-written reverse-mode gradients.
//!
//! Layer `i` computes `z = a·W_i + b_i` with `W_i` of shape `[in, out]`,
//! followed by the activation on every hidden layer and, when
//! `output_activation` is set, on the last layer too.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::rng::{seeded, DgRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input dimension first, output dimension last.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub init_scale: f64,
    /// Apply the activation to the final layer as well (feature extractors).
    #[serde(default)]
    pub output_activation: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Self {
        Self {
            layer_sizes,
            activation,
            init_scale: 1.0,
            output_activation: false,
        }
    }

    pub fn with_output_activation(mut self, on: bool) -> Self {
        self.output_activation = on;
        self
    }

    pub fn with_init_scale(mut self, scale: f64) -> Self {
        self.init_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "network needs at least 2 layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must be >= 1, got {:?}",
                self.layer_sizes
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidConfig("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_scalars(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Everything recorded by [`Mlp::forward`] that [`Mlp::backward`] needs.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    /// Input to each layer (`inputs[0]` is the network input).
    pub inputs: Vec<Tensor>,
    /// Pre-activation of each layer.
    pub pre: Vec<Tensor>,
    pub output: Tensor,
}

impl ActivationTrace {
    pub fn logits(&self) -> &Tensor {
        &self.output
    }
}

/// A network spec bound to a parameter-name prefix inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub prefix: String,
}

impl Mlp {
    pub fn new(spec: MlpSpec, prefix: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            prefix: prefix.into(),
        })
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}w{layer}", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}b{layer}", self.prefix)
    }

    /// Registers this network's parameters in `params`, drawing weights
    /// from `U(-s, s)` with `s = init_scale / sqrt(fan_in)`; biases are zero.
    pub fn init_into(&self, params: &mut ParamSet, rng: &mut DgRng) -> Result<()> {
        for (i, w) in self.spec.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = self.spec.init_scale / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| {
                    if bound > 0.0 {
                        rng.random_range(-bound..=bound)
                    } else {
                        0.0
                    }
                })
                .collect();
            params.insert(self.weight_name(i), Tensor::new(vec![fan_in, fan_out], data)?)?;
            params.insert(self.bias_name(i), Tensor::zeros(&[fan_out]))?;
        }
        Ok(())
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.spec.num_layers() || self.spec.output_activation
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<ActivationTrace> {
        if x.shape().len() != 2 || x.cols() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "network `{}` expects [batch, {}] input, got {:?}",
                self.prefix,
                self.spec.input_dim(),
                x.shape()
            )));
        }
        let mut inputs = Vec::with_capacity(self.spec.num_layers());
        let mut pre = Vec::with_capacity(self.spec.num_layers());
        let mut a = x.clone();
        for layer in 0..self.spec.num_layers() {
            let w = params.value(&self.weight_name(layer))?;
            let b = params.value(&self.bias_name(layer))?;
            let z = affine(&a, w, b)?;
            let out = if self.activated(layer) {
                let act = self.spec.activation;
                let data = z.data().iter().map(|&v| act.apply(v)).collect();
                Tensor::new(z.shape().to_vec(), data)?
            } else {
                z.clone()
            };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok(ActivationTrace { inputs, pre, output: a })
    }

    /// Adds parameter gradients for `d_out` into `params` and returns the
    /// gradient with respect to the network input.
    pub fn backward(&self, params: &mut ParamSet, trace: &ActivationTrace, d_out: &Tensor) -> Result<Tensor> {
        trace.output.check_same_shape(d_out)?;
        let mut grad = d_out.clone();
        for layer in (0..self.spec.num_layers()).rev() {
            if self.activated(layer) {
                let act = self.spec.activation;
                let y = if layer + 1 < self.spec.num_layers() {
                    &trace.inputs[layer + 1]
                } else {
                    &trace.output
                };
                for ((g, &z), &yv) in grad.data_mut().iter_mut().zip(trace.pre[layer].data()).zip(y.data()) {
                    *g *= act.derivative(z, yv);
                }
            }
            let a = &trace.inputs[layer];
            let (fan_in, fan_out) = (a.cols(), grad.cols());
            {
                let gw = params.grad_mut(&self.weight_name(layer))?;
                let gw = gw.data_mut();
                for r in 0..a.rows() {
                    let ar = a.row(r);
                    let gr = grad.row(r);
                    for i in 0..fan_in {
                        let ai = ar[i];
                        let dst = &mut gw[i * fan_out..(i + 1) * fan_out];
                        for (d, &g) in dst.iter_mut().zip(gr) {
                            *d += ai * g;
                        }
                    }
                }
            }
            {
                let gb = params.grad_mut(&self.bias_name(layer))?;
                let gb = gb.data_mut();
                for r in 0..grad.rows() {
                    for (d, &g) in gb.iter_mut().zip(grad.row(r)) {
                        *d += g;
                    }
                }
            }
            let w = params.value(&self.weight_name(layer))?;
            grad = matmul_transposed(&grad, w);
        }
        Ok(grad)
    }
}

/// `a·W + b` for `a: [n, in]`, `W: [in, out]`, `b: [out]`.
fn affine(a: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, fan_in) = (a.rows(), a.cols());
    if w.shape() != [fan_in, b.len()] {
        return Err(Error::Shape(format!(
            "input width {fan_in} incompatible with weight {:?}",
            w.shape()
        )));
    }
    let fan_out = b.len();
    let mut out = Vec::with_capacity(n * fan_out);
    for r in 0..n {
        let mut row = b.data().to_vec();
        let ar = a.row(r);
        for (i, &ai) in ar.iter().enumerate() {
            let wr = &w.data()[i * fan_out..(i + 1) * fan_out];
            for (o, &wv) in row.iter_mut().zip(wr) {
                *o += ai * wv;
            }
        }
        out.extend(row);
    }
    Tensor::new(vec![n, fan_out], out)
}

/// `g·Wᵀ` for `g: [n, out]`, `W: [in, out]`.
fn matmul_transposed(g: &Tensor, w: &Tensor) -> Tensor {
    let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
    let n = g.rows();
    let mut out = vec![0.0; n * fan_in];
    for r in 0..n {
        let gr = g.row(r);
        for i in 0..fan_in {
            let wr = &w.data()[i * fan_out..(i + 1) * fan_out];
            out[r * fan_in + i] = wr.iter().zip(gr).map(|(a, b)| a * b).sum();
        }
    }
    Tensor::new(vec![n, fan_in], out).expect("shape computed above")
}

/// Initializes a standalone network with parameter names `w0, b0, w1, ...`.
pub fn mlp_init(spec: &MlpSpec, seed: u64) -> Result<ParamSet> {
    let mlp = Mlp::new(spec.clone(), "")?;
    let mut params = ParamSet::new(seed);
    mlp.init_into(&mut params, &mut seeded(seed))?;
    Ok(params)
}

pub fn forward(params: &ParamSet, spec: &MlpSpec, x: &Tensor) -> Result<ActivationTrace> {
    Mlp::new(spec.clone(), "")?.forward(params, x)
}

pub fn backward(params: &mut ParamSet, spec: &MlpSpec, trace: &ActivationTrace, d_logits: &Tensor) -> Result<Tensor> {
    Mlp::new(spec.clone(), "")?.backward(params, trace, d_logits)
}
