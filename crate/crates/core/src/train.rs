//! Minibatch training with SGD+momentum or Adam.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{backward_batch, Gradients, LossKind, Network, Scratch, Target};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" | "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            other => Err(Error::Config(format!(
                "optimizer must be adam or sgd, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD only.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 ceiling on each minibatch gradient.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            learning_rate,
            momentum,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must be in [0, 1)".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("adam epsilon must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Rescales `g` so its global L2 norm is at most `clip_norm`.
pub fn clip_gradients(mut g: Gradients, clip_norm: f64) -> Result<Gradients> {
    if clip_norm.is_nan() || clip_norm <= 0.0 {
        return Err(Error::Usage(format!(
            "clip_norm must be positive, got {clip_norm}"
        )));
    }
    let norm = g.norm();
    if norm > clip_norm {
        g.scale(clip_norm / norm);
    }
    Ok(g)
}

/// Optimizer state. SGD keeps a velocity `v ← μv − lr·g; θ ← θ + v`;
/// Adam keeps bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Gradients,
    second: Gradients,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, net: &Network) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            steps: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Network, g: &Gradients) -> Result<()> {
        g.ensure_matches(net)?;
        if !self.first.matches(net) {
            return Err(Error::Shape(
                "optimizer state does not match network".into(),
            ));
        }
        self.steps += 1;
        let cfg = &self.config;
        let lr = cfg.learning_rate;
        match cfg.kind {
            OptimizerKind::SgdMomentum => {
                for ((layer, gl), vl) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(&g.layers)
                    .zip(&mut self.first.layers)
                {
                    sgd_update(
                        layer.weights_mut(),
                        &gl.weights,
                        &mut vl.weights,
                        cfg.momentum,
                        lr,
                    );
                    sgd_update(
                        layer.biases_mut(),
                        &gl.biases,
                        &mut vl.biases,
                        cfg.momentum,
                        lr,
                    );
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - cfg.beta1.powi(t);
                let c2 = 1.0 - cfg.beta2.powi(t);
                let hp = AdamParams {
                    lr,
                    b1: cfg.beta1,
                    b2: cfg.beta2,
                    eps: cfg.epsilon,
                    c1,
                    c2,
                };
                for (((layer, gl), ml), vl) in net
                    .layers_mut()
                    .iter_mut()
                    .zip(&g.layers)
                    .zip(&mut self.first.layers)
                    .zip(&mut self.second.layers)
                {
                    adam_update(
                        layer.weights_mut(),
                        &gl.weights,
                        &mut ml.weights,
                        &mut vl.weights,
                        &hp,
                    );
                    adam_update(
                        layer.biases_mut(),
                        &gl.biases,
                        &mut ml.biases,
                        &mut vl.biases,
                        &hp,
                    );
                }
            }
        }
        Ok(())
    }
}

fn sgd_update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], mu: f64, lr: f64) {
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity) {
        *v = mu * *v - lr * g;
        *p += *v;
    }
}

struct AdamParams {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], hp: &AdamParams) {
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
        *m = hp.b1 * *m + (1.0 - hp.b1) * g;
        *v = hp.b2 * *v + (1.0 - hp.b2) * g * g;
        let m_hat = *m / hp.c1;
        let v_hat = *v / hp.c2;
        *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
}

/// Minibatch training with a seeded reshuffle every epoch. Deterministic in
/// `(net, data, config, epochs, batch_size, seed)`.
pub fn train(
    net: &Network,
    data: &Dataset,
    config: &OptimizerConfig,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(Network, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Usage("cannot train on an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    check_compatible(net, data)?;
    let mut net = net.clone();
    let mut opt = Optimizer::new(config.clone(), &net)?;
    let mut rng = seed::rng_for(seed, "shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            let examples = batch.iter().map(|&i| {
                let (x, c) = data.row(i);
                (x, Target::Class(c))
            });
            let (loss, mut grads) = backward_batch(&net, examples, LossKind::CrossEntropy)?;
            if let Some(clip) = config.clip_norm {
                grads = clip_gradients(grads, clip)?;
            }
            opt.step(&mut net, &grads)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || !net.is_finite() {
            return Err(Error::Numeric(
                "training diverged to non-finite values".into(),
            ));
        }
        epoch_losses.push(mean);
    }

    let train_accuracy = accuracy(&net, data)?;
    Ok((
        net,
        TrainReport {
            epoch_losses,
            train_accuracy,
            test_accuracy: None,
            epochs,
            seed,
        },
    ))
}

fn check_compatible(net: &Network, data: &Dataset) -> Result<()> {
    if data.dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features, network expects {}",
            data.dim(),
            net.input_dim()
        )));
    }
    if data.num_classes() > net.num_classes() {
        return Err(Error::Shape(format!(
            "dataset has labels up to {}, network has {} classes",
            data.num_classes() - 1,
            net.num_classes()
        )));
    }
    Ok(())
}

/// Fraction of rows whose argmax logit (lowest index on ties) equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Usage("accuracy of an empty dataset".into()));
    }
    check_compatible(net, data)?;
    let mut scratch = Scratch::default();
    let correct = data
        .iter()
        .filter(|(x, c)| net.predict(x, &mut scratch) == *c)
        .count();
    Ok(correct as f64 / data.len() as f64)
}
