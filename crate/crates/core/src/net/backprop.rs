use super::loss::{check_set, log_sum_exp, sample_loss};
use super::{LossKind, Network, Target};
use crate::error::{Error, Result};
use crate::prototypes::PrototypeSet;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// Row-major, same shape as the layer's weights.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-parameter gradients, shape-congruent with a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights().len()],
                    biases: vec![0.0; l.biases().len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, net: &Network) -> bool {
        self.layers.len() == net.num_layers()
            && self.layers.iter().zip(net.layers()).all(|(g, l)| {
                g.weights.len() == l.weights().len() && g.biases.len() == l.biases().len()
            })
    }

    pub fn ensure_matches(&self, net: &Network) -> Result<()> {
        if self.matches(net) {
            Ok(())
        } else {
            Err(Error::Shape("gradients do not match network shape".into()))
        }
    }

    /// Every entry in canonical parameter order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.iter_mut().for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

/// Mean loss and its exact gradient over an evaluation set.
pub fn backward(net: &Network, set: &PrototypeSet, kind: LossKind) -> Result<(f64, Gradients)> {
    check_set(net, set)?;
    backward_batch(
        net,
        set.iter()
            .map(|p| (p.x.as_slice(), Target::Distribution(&p.y))),
        kind,
    )
}

/// Mean loss and gradient over arbitrary examples.
pub fn backward_batch<'a, I>(net: &Network, examples: I, kind: LossKind) -> Result<(f64, Gradients)>
where
    I: IntoIterator<Item = (&'a [f64], Target<'a>)>,
{
    let mut grads = Gradients::zeros_like(net);
    let mut tape = Tape::new(net);
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, target) in examples {
        net.check_input(x)?;
        total += tape.accumulate(net, x, target, kind, &mut grads);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Usage("no examples to differentiate".into()));
    }
    let inv = 1.0 / count as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Per-sample activations kept for the backward sweep.
struct Tape {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl Tape {
    fn new(net: &Network) -> Self {
        Self {
            pre: net
                .layers()
                .iter()
                .map(|l| Vec::with_capacity(l.out_dim()))
                .collect(),
            post: net
                .layers()
                .iter()
                .map(|l| Vec::with_capacity(l.out_dim()))
                .collect(),
            delta: Vec::new(),
            next_delta: Vec::new(),
        }
    }

    /// Adds this example's (unscaled) gradient into `grads`; returns its loss.
    fn accumulate(
        &mut self,
        net: &Network,
        x: &[f64],
        target: Target<'_>,
        kind: LossKind,
        grads: &mut Gradients,
    ) -> f64 {
        let layers = net.layers();
        for (k, layer) in layers.iter().enumerate() {
            let (done, rest) = self.post.split_at_mut(k);
            let input = if k == 0 { x } else { &done[k - 1] };
            layer.forward_into(input, &mut self.pre[k], &mut rest[0]);
        }
        let last = layers.len() - 1;
        let logits = &self.post[last];
        let loss = sample_loss(logits, target, kind);

        // dL/dz at the output; the output activation is folded in below.
        self.delta.clear();
        match kind {
            LossKind::CrossEntropy => {
                let lse = log_sum_exp(logits);
                let mass: f64 = (0..logits.len()).map(|c| target.weight(c)).sum();
                self.delta.extend(
                    logits
                        .iter()
                        .enumerate()
                        .map(|(c, z)| mass * (z - lse).exp() - target.weight(c)),
                );
            }
            LossKind::Mse => {
                let scale = 2.0 / logits.len() as f64;
                self.delta.extend(
                    logits
                        .iter()
                        .enumerate()
                        .map(|(c, z)| scale * (z - target.weight(c))),
                );
            }
        }

        for k in (0..=last).rev() {
            let layer = &layers[k];
            let act = layer.activation();
            for (d, (z, a)) in self
                .delta
                .iter_mut()
                .zip(self.pre[k].iter().zip(&self.post[k]))
            {
                *d *= act.derivative(*z, *a);
            }
            let input = if k == 0 { x } else { &self.post[k - 1] };
            let g = &mut grads.layers[k];
            let in_dim = layer.in_dim();
            for (i, &d) in self.delta.iter().enumerate() {
                g.biases[i] += d;
                if d != 0.0 {
                    let row = &mut g.weights[i * in_dim..(i + 1) * in_dim];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
            }
            if k > 0 {
                self.next_delta.clear();
                self.next_delta.resize(in_dim, 0.0);
                for (i, &d) in self.delta.iter().enumerate() {
                    if d != 0.0 {
                        for (nd, w) in self.next_delta.iter_mut().zip(layer.row(i)) {
                            *nd += d * w;
                        }
                    }
                }
                std::mem::swap(&mut self.delta, &mut self.next_delta);
            }
        }
        loss
    }
}
