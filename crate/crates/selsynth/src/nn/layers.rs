//! Dense layers and small multi-layer perceptrons.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{Activation, NodeId, Tape};
use crate::nn::tensor::Tensor2;

/// A dense affine layer: `y = activation(x W + b)`.
///
/// `weight` is `in_dim x out_dim`, `bias` is `1 x out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform initialized layer.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let mut weight = Tensor2::zeros(in_dim, out_dim);
        for w in weight.data_mut() {
            *w = dist.sample(rng);
        }
        DenseLayer {
            weight,
            bias: Tensor2::zeros(1, out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Forward pass of a single dense layer outside the tape.
pub fn dense_forward(layer: &DenseLayer, input: &Tensor2) -> Result<Tensor2> {
    if input.cols() != layer.in_dim() {
        return Err(Error::Shape(format!(
            "dense_forward: input width {} vs layer in_dim {}",
            input.cols(),
            layer.in_dim()
        )));
    }
    let mut h = input.matmul(&layer.weight)?;
    let bias = layer.bias.data();
    for r in 0..h.rows() {
        for c in 0..h.cols() {
            let v = layer.activation.apply(h.get(r, c) + bias[c]);
            h.set(r, c, v);
        }
    }
    Ok(h)
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// Build from `dims = [in, h1, ..., out]` with `hidden` activation on all
    /// layers except the last, which gets `output`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an mlp needs at least one layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let act = if i + 2 == dims.len() { output } else { hidden };
            layers.push(DenseLayer::new(dims[i], dims[i + 1], act, rng));
        }
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        let mut h = input.clone();
        for layer in &self.layers {
            h = dense_forward(layer, &h)?;
        }
        Ok(h)
    }

    /// Parameters in a stable order (weight then bias per layer).
    pub fn params(&self) -> Vec<&Tensor2> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Register all parameters as tape leaves.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            layers.push(LayerVars {
                weight: tape.leaf(l.weight.clone()),
                bias: tape.leaf(l.bias.clone()),
                activation: l.activation,
            });
        }
        MlpVars { layers }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub weight: NodeId,
    pub bias: NodeId,
    pub activation: Activation,
}

/// Tape-registered parameters of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<LayerVars>,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let mut h = input;
        for l in &self.layers {
            let z = tape.matmul(h, l.weight)?;
            let z = tape.add_row_vec(z, l.bias)?;
            h = tape.activation(z, l.activation);
        }
        Ok(h)
    }

    /// Forward pass that also constructs, as tape nodes, the gradient of the
    /// scalar output with respect to the input batch. Requires out_dim 1.
    ///
    /// Returns `(output, d output / d input)` where the second tensor has the
    /// input's shape. Because the per-layer derivative factors are recorded
    /// through [`Tape::activation_grad`], differentiating an expression built
    /// on the returned gradient flows correctly back into the parameters.
    pub fn forward_with_input_grad(
        &self,
        tape: &mut Tape,
        input: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let rows = tape.value(input).rows();
        let mut h = input;
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let z = tape.matmul(h, l.weight)?;
            let z = tape.add_row_vec(z, l.bias)?;
            pre_acts.push(z);
            h = tape.activation(z, l.activation);
        }
        let out = h;
        if tape.value(out).cols() != 1 {
            return Err(Error::Shape(
                "input gradient needs a scalar-output net".into(),
            ));
        }

        let mut g = tape.leaf(Tensor2::from_vec(rows, 1, vec![1.0; rows])?);
        for (l, z) in self.layers.iter().zip(&pre_acts).rev() {
            let sigma_prime = tape.activation_grad(*z, l.activation);
            let gated = tape.mul_elem(g, sigma_prime)?;
            let wt = tape.transpose(l.weight);
            g = tape.matmul(gated, wt)?;
        }
        Ok((out, g))
    }

    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.weight);
            out.push(l.bias);
        }
        out
    }
}
