//! Feed-forward dense networks.
//!
//! A [`Network`] is an ordered stack of [`DenseLayer`]s computing
//! `a_k = act_k(W_k a_{k-1} + b_k)`. The final layer is linear and produces
//! logits; the softmax lives inside the loss. Parameters are 64-bit floats
//! stored row-major, so row `i` of a layer holds the incoming weights of its
//! neuron `i`.
//!
//! Every parameter is reachable through exactly one [`StructureAddress`] at
//! weight granularity: a neuron's bias is the "weight" at index `in_dim`.

mod address;
mod backprop;
mod io;
mod loss;

pub use address::{Granularity, ParamBlock, StructureAddress};
pub use backprop::{backward, backward_batch, Gradients, LayerGradients};
pub use io::MODEL_FORMAT;
pub use loss::{
    cross_entropy_loss, log_softmax, log_sum_exp, loss, mse_loss, softmax, LossKind, Target,
};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!(
                "activation must be relu, tanh or identity, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major, shape (out_dim, in_dim).
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    /// Builds a layer from explicit rows. Fails if rows are ragged, if the
    /// row count differs from the bias count, or if any value is non-finite.
    pub fn from_rows(rows: &[Vec<f64>], biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("layer has no neurons".into()));
        }
        if rows.len() != biases.len() {
            return Err(Error::Shape(format!(
                "{} weight rows but {} biases",
                rows.len(),
                biases.len()
            )));
        }
        let in_dim = rows[0].len();
        if in_dim == 0 {
            return Err(Error::Shape("layer has zero inputs".into()));
        }
        let mut weights = Vec::with_capacity(rows.len() * in_dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != in_dim {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {in_dim}",
                    row.len()
                )));
            }
            weights.extend_from_slice(row);
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self {
            in_dim,
            out_dim: rows.len(),
            weights,
            biases,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    #[inline]
    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Incoming weights of neuron `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.in_dim)
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn same_shape(&self, other: &DenseLayer) -> bool {
        self.in_dim == other.in_dim
            && self.out_dim == other.out_dim
            && self.activation == other.activation
    }

    /// `out = act(W x + b)`, also returning pre-activations in `pre`.
    #[inline]
    fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        pre.clear();
        out.clear();
        for (row, &b) in self.rows().zip(&self.biases) {
            let z = row.iter().zip(x).fold(b, |acc, (w, xi)| acc + w * xi);
            pre.push(z);
            out.push(self.activation.apply(z));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    num_classes: usize,
    layers: Vec<DenseLayer>,
}

impl Network {
    /// Assembles a network, checking that consecutive layer shapes chain.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Shape("network has no layers".into()))?;
        let input_dim = first.in_dim;
        for k in 1..layers.len() {
            if layers[k].in_dim != layers[k - 1].out_dim {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs but layer {} produces {}",
                    layers[k].in_dim,
                    k - 1,
                    layers[k - 1].out_dim
                )));
            }
        }
        let num_classes = layers[layers.len() - 1].out_dim;
        Ok(Self {
            input_dim,
            num_classes,
            layers,
        })
    }

    /// All-zero network with relu hidden layers and a linear output.
    /// `arch` lists layer widths including input and output, e.g. `[32, 64, 20]`.
    pub fn zeros(arch: &[usize]) -> Result<Self> {
        Self::zeros_with(arch, Activation::Relu)
    }

    /// All-zero network with the given hidden activation and a linear output.
    pub fn zeros_with(arch: &[usize], hidden: Activation) -> Result<Self> {
        validate_arch(arch)?;
        let n = arch.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n {
                    Activation::Identity
                } else {
                    hidden
                };
                DenseLayer::zeros(arch[k], arch[k + 1], act)
            })
            .collect();
        Self::new(layers)
    }

    /// He-normal weights (`N(0, 2/fan_in)`), zero biases, relu hidden layers.
    pub fn random(arch: &[usize], seed: u64) -> Result<Self> {
        Self::random_with(arch, Activation::Relu, seed)
    }

    pub fn random_with(arch: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros_with(arch, hidden)?;
        let mut rng = seed::rng_for(seed, "init");
        for layer in &mut net.layers {
            let std = (2.0 / layer.in_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut layer.weights {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer widths including the input, e.g. `[32, 64, 64, 20]`.
    pub fn arch(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// All parameters in canonical order: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// True when both networks have identical shapes and activations.
    pub fn is_compatible(&self, other: &Network) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn ensure_compatible(&self, other: &Network) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "architectures differ: {:?} vs {:?}",
                self.arch(),
                other.arch()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Logits for a single input.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scratch = Scratch::default();
        Ok(self.forward_scratch(x, &mut scratch).to_vec())
    }

    /// Logits for each input in the batch.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut scratch = Scratch::default();
        inputs
            .iter()
            .map(|x| {
                self.check_input(x)?;
                Ok(self.forward_scratch(x, &mut scratch).to_vec())
            })
            .collect()
    }

    /// Index of the largest logit; ties resolve to the lowest index.
    pub fn predict(&self, x: &[f64], scratch: &mut Scratch) -> usize {
        argmax(self.forward_scratch(x, scratch))
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass reusing `scratch`; input length is not checked.
    pub(crate) fn forward_scratch<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        let Scratch { a, b, pre } = scratch;
        a.clear();
        a.extend_from_slice(x);
        for layer in &self.layers {
            layer.forward_into(a, pre, b);
            std::mem::swap(a, b);
        }
        a
    }
}

/// Reusable buffers for allocation-free forward passes.
#[derive(Debug, Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
    pre: Vec<f64>,
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn validate_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 {
        return Err(Error::Config(
            "architecture needs at least an input and an output width".into(),
        ));
    }
    if arch.contains(&0) {
        return Err(Error::Config(format!("zero-width layer in {arch:?}")));
    }
    Ok(())
}

/// Parses `"32,64,64,20"`.
pub fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let arch = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad layer width {p:?} in arch {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_arch(&arch)?;
    Ok(arch)
}
