use serde::{Deserialize, Serialize};

use super::{Network, Scratch};
use crate::error::{Error, Result};
use crate::prototypes::PrototypeSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    Mse,
}

/// Target of one training or evaluation example.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Distribution(&'a [f64]),
}

impl Target<'_> {
    #[inline]
    pub(crate) fn weight(&self, c: usize) -> f64 {
        match *self {
            Target::Class(t) => {
                if t == c {
                    1.0
                } else {
                    0.0
                }
            }
            Target::Distribution(y) => y[c],
        }
    }
}

/// `log(sum(exp(v)))` with max subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("softmax of non-finite logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Loss of a single example from its logits.
#[inline]
pub(crate) fn sample_loss(logits: &[f64], target: Target<'_>, kind: LossKind) -> f64 {
    match kind {
        LossKind::CrossEntropy => {
            let lse = log_sum_exp(logits);
            match target {
                Target::Class(t) => lse - logits[t],
                Target::Distribution(y) => y
                    .iter()
                    .zip(logits)
                    .filter(|(yc, _)| **yc != 0.0)
                    .map(|(yc, z)| yc * (lse - z))
                    .sum(),
            }
        }
        LossKind::Mse => {
            let c = logits.len() as f64;
            logits
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let d = z - target.weight(i);
                    d * d
                })
                .sum::<f64>()
                / c
        }
    }
}

pub(crate) fn check_set(net: &Network, set: &PrototypeSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Usage("evaluation set is empty".into()));
    }
    if set.input_dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "evaluation inputs have length {}, network expects {}",
            set.input_dim(),
            net.input_dim()
        )));
    }
    if set.target_dim() != net.num_classes() {
        return Err(Error::Shape(format!(
            "evaluation targets have length {}, network has {} outputs",
            set.target_dim(),
            net.num_classes()
        )));
    }
    Ok(())
}

/// Mean loss over the set: cross-entropy uses the fused log-sum-exp form,
/// MSE averages squared error over output dimensions and then over examples.
pub fn loss(net: &Network, set: &PrototypeSet, kind: LossKind) -> Result<f64> {
    check_set(net, set)?;
    let mut scratch = Scratch::default();
    let total: f64 = set
        .iter()
        .map(|p| {
            sample_loss(
                net.forward_scratch(&p.x, &mut scratch),
                Target::Distribution(&p.y),
                kind,
            )
        })
        .sum();
    Ok(total / set.len() as f64)
}

pub fn cross_entropy_loss(net: &Network, set: &PrototypeSet) -> Result<f64> {
    loss(net, set, LossKind::CrossEntropy)
}

pub fn mse_loss(net: &Network, set: &PrototypeSet) -> Result<f64> {
    loss(net, set, LossKind::Mse)
}
