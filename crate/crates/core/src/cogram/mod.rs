//! Context-sensitive granular merging.
//!
//! A working network `M` (usually a Fisher merge of `A` and `B`) is swept
//! from its last layer to its first. For each structure, `A`'s block and then
//! `B`'s block are inserted into `M` and the loss on a fixed evaluation set is
//! measured. The difference `ΔL = L_A − L_B` sets a sigmoid mixing factor
//! `α = 1 / (1 + exp(λ ΔL))` and the structure becomes `α·A + (1 − α)·B`.
//!
//! Per-level thresholds decide whether `|ΔL|` is trusted at the current level
//! (`τ_min ≤ |ΔL| ≤ τ_max`) or whether the decision is refined one level
//! down: layer → neuron → weight. Neuron and weight updates are kept only if
//! they strictly lower the loss of `M`; otherwise the structure is restored
//! to the fusion installed at the coarser level.

mod kickoff;
mod report;

pub use kickoff::{gradient_kickoff, KickoffConfig, KickoffReport};
pub use report::{Action, Case, DecisionRecord, IterationReport, MergeReport};

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{loss, Granularity, LossKind, Network, ParamBlock, StructureAddress};
use crate::prototypes::{
    build_prototypes_kmeans, build_prototypes_onehot, build_raw_batch, PrototypeSet,
    DEFAULT_EPSILON,
};
use crate::serde_util;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(with = "serde_util")]
    pub tau_min: f64,
    #[serde(with = "serde_util")]
    pub tau_max: f64,
}

impl Thresholds {
    /// `τ_min = 0`, `τ_max = ∞`: every decision merges directly.
    pub const DIRECT: Thresholds = Thresholds {
        tau_min: 0.0,
        tau_max: f64::INFINITY,
    };

    pub fn new(tau_min: f64, tau_max: f64) -> Result<Self> {
        let t = Self { tau_min, tau_max };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min >= 0.0 && self.tau_min.is_finite() && self.tau_max >= self.tau_min) {
            return Err(Error::Config(format!(
                "thresholds need 0 <= tau_min <= tau_max, got ({}, {})",
                self.tau_min, self.tau_max
            )));
        }
        Ok(())
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::DIRECT
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelThresholds {
    pub layer: Thresholds,
    pub neuron: Thresholds,
    pub weight: Thresholds,
}

impl LevelThresholds {
    pub fn uniform(t: Thresholds) -> Self {
        Self {
            layer: t,
            neuron: t,
            weight: t,
        }
    }

    pub fn at(&self, level: Granularity) -> Thresholds {
        match level {
            Granularity::Layer => self.layer,
            Granularity::Neuron => self.neuron,
            Granularity::Weight => self.weight,
        }
    }
}

/// How the evaluation set is built from the combined training data.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalSpec {
    #[default]
    Onehot,
    Kmeans {
        k_per_class: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_kmeans_iters")]
        max_iters: usize,
    },
    Batch {
        size: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_kmeans_iters() -> usize {
    50
}

impl std::str::FromStr for EvalSpec {
    type Err = Error;

    /// `onehot`, `kmeans:K` or `batch:N`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "prototype spec must be onehot, kmeans:K or batch:N, got {s:?}"
            ))
        };
        match s.split_once(':') {
            None if s == "onehot" => Ok(EvalSpec::Onehot),
            Some(("kmeans", k)) => Ok(EvalSpec::Kmeans {
                k_per_class: k.parse().map_err(|_| bad())?,
                seed: 0,
                max_iters: default_kmeans_iters(),
            }),
            Some(("batch", n)) => Ok(EvalSpec::Batch {
                size: n.parse().map_err(|_| bad())?,
                seed: 0,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    /// Sigmoid steepness.
    pub lambda: f64,
    pub thresholds: LevelThresholds,
    /// Deepest level the sweep may descend to.
    pub max_granularity: Granularity,
    /// Stabilizer of the geometric-mean prototypes.
    pub epsilon: f64,
    pub eval: EvalSpec,
    pub iterations: usize,
    pub loss: LossKind,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            lambda: 5.5,
            thresholds: LevelThresholds::default(),
            max_granularity: Granularity::Layer,
            epsilon: DEFAULT_EPSILON,
            eval: EvalSpec::Onehot,
            iterations: 1,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        for t in [
            self.thresholds.layer,
            self.thresholds.neuron,
            self.thresholds.weight,
        ] {
            t.validate()?;
        }
        Ok(())
    }

    pub fn build_eval_set(&self, data: &Dataset) -> Result<PrototypeSet> {
        match self.eval {
            EvalSpec::Onehot => build_prototypes_onehot(data, self.epsilon),
            EvalSpec::Kmeans {
                k_per_class,
                seed,
                max_iters,
            } => build_prototypes_kmeans(data, k_per_class, seed, max_iters, self.epsilon),
            EvalSpec::Batch { size, seed } => build_raw_batch(data, size, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDifference {
    pub loss_a: f64,
    pub loss_b: f64,
    /// `loss_a − loss_b`; negative when A's block is better.
    pub delta: f64,
}

/// Loss of `m` with the block at `addr` taken from `a`, then from `b`.
/// `m` is restored bit-for-bit before returning, including on error.
pub fn loss_difference(
    m: &mut Network,
    addr: StructureAddress,
    a: &Network,
    b: &Network,
    eval_set: &PrototypeSet,
    kind: LossKind,
) -> Result<LossDifference> {
    let original = m.get_structure(addr)?;
    let block_a = a.get_structure(addr)?;
    let block_b = b.get_structure(addr)?;
    let result = candidate_losses(m, addr, &block_a, &block_b, eval_set, kind);
    m.set_structure(addr, &original)?;
    let (loss_a, loss_b) = result?;
    Ok(LossDifference {
        loss_a,
        loss_b,
        delta: loss_a - loss_b,
    })
}

fn candidate_losses(
    m: &mut Network,
    addr: StructureAddress,
    block_a: &ParamBlock,
    block_b: &ParamBlock,
    eval_set: &PrototypeSet,
    kind: LossKind,
) -> Result<(f64, f64)> {
    m.set_structure(addr, block_a)?;
    let la = loss(m, eval_set, kind)?;
    m.set_structure(addr, block_b)?;
    let lb = loss(m, eval_set, kind)?;
    Ok((la, lb))
}

/// `α = 1 / (1 + exp(λ·ΔL))`. An overflowing exponential gives exactly 0 and
/// an underflowing one exactly 1, so no input produces NaN.
pub fn mixing_factor(delta: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + (lambda * delta).exp())
}

/// `α·A + (1 − α)·B`, elementwise.
pub fn convex_combine(
    block_a: &ParamBlock,
    block_b: &ParamBlock,
    alpha: f64,
) -> Result<ParamBlock> {
    if block_a.len() != block_b.len() {
        return Err(Error::Shape(format!(
            "cannot combine blocks of length {} and {}",
            block_a.len(),
            block_b.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "mixing factor must be in [0, 1], got {alpha}"
        )));
    }
    let beta = 1.0 - alpha;
    Ok(ParamBlock(
        block_a
            .0
            .iter()
            .zip(&block_b.0)
            .map(|(x, y)| alpha * x + beta * y)
            .collect(),
    ))
}

/// Case 1: `|ΔL| < τ_min`; Case 2: `|ΔL| > τ_max`; Case 3 otherwise
/// (both boundaries belong to Case 3).
pub fn classify_case(delta: f64, tau_min: f64, tau_max: f64) -> Result<Case> {
    Thresholds { tau_min, tau_max }.validate()?;
    Ok(case_of(delta, tau_min, tau_max))
}

fn case_of(delta: f64, tau_min: f64, tau_max: f64) -> Case {
    let d = delta.abs();
    if d < tau_min {
        Case::Uncertain
    } else if d > tau_max {
        Case::TooCoarse
    } else {
        Case::Direct
    }
}

/// Everything a sweep needs besides the working network.
#[derive(Debug, Clone, Copy)]
pub struct MergeContext<'a> {
    pub a: &'a Network,
    pub b: &'a Network,
    pub eval_set: &'a PrototypeSet,
    pub config: &'a MergeConfig,
}

impl MergeContext<'_> {
    fn loss(&self, m: &Network) -> Result<f64> {
        loss(m, self.eval_set, self.config.loss)
    }

    /// Candidate losses, α, the fused block and the threshold case.
    fn evaluate(
        &self,
        m: &mut Network,
        addr: StructureAddress,
    ) -> Result<(LossDifference, f64, ParamBlock, Case)> {
        let diff = loss_difference(m, addr, self.a, self.b, self.eval_set, self.config.loss)?;
        if !diff.delta.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss difference at {addr}"
            )));
        }
        let alpha = mixing_factor(diff.delta, self.config.lambda);
        let fused = convex_combine(
            &self.a.get_structure(addr)?,
            &self.b.get_structure(addr)?,
            alpha,
        )?;
        let t = self.config.thresholds.at(addr.granularity());
        Ok((
            diff,
            alpha,
            fused,
            case_of(diff.delta, t.tau_min, t.tau_max),
        ))
    }

    fn refines(&self, case: Case, level: Granularity) -> bool {
        case != Case::Direct && level < self.config.max_granularity
    }
}

/// Fuses layer `layer` of `m`. Case 3 (or Cases 1/2 at the granularity limit)
/// installs `α·A + (1 − α)·B` for the whole layer. Cases 1/2 with room to
/// refine install that fusion as the baseline and then visit every neuron.
/// There is no rollback at this level.
pub fn merge_layer_level(
    m: &mut Network,
    layer: usize,
    ctx: &MergeContext<'_>,
    records: &mut Vec<DecisionRecord>,
) -> Result<()> {
    let addr = StructureAddress::layer(layer);
    let loss_pre = ctx.loss(m)?;
    let (diff, alpha, fused, case) = ctx.evaluate(m, addr)?;
    m.set_structure(addr, &fused)?;
    let action = if ctx.refines(case, Granularity::Layer) {
        for neuron in 0..m.layers()[layer].out_dim() {
            merge_neuron_level(m, layer, neuron, ctx, records)?;
        }
        Action::Refined
    } else {
        Action::Merged
    };
    let loss_post = ctx.loss(m)?;
    records.push(DecisionRecord::new(
        addr, diff, case, alpha, action, loss_pre, loss_post,
    ));
    Ok(())
}

/// Fuses one neuron (weight row plus bias) with its own α. The neuron's
/// current parameters are the rollback target; the result is kept only if it
/// strictly lowers the loss of `m`. When refining, the neuron-level fusion is
/// installed as the baseline for the weight pass and the same guard is applied
/// to the neuron's state after that pass.
pub fn merge_neuron_level(
    m: &mut Network,
    layer: usize,
    neuron: usize,
    ctx: &MergeContext<'_>,
    records: &mut Vec<DecisionRecord>,
) -> Result<()> {
    let addr = StructureAddress::neuron(layer, neuron);
    let baseline = m.get_structure(addr)?;
    let loss_pre = ctx.loss(m)?;
    let (diff, alpha, fused, case) = ctx.evaluate(m, addr)?;
    m.set_structure(addr, &fused)?;
    let refined = ctx.refines(case, Granularity::Neuron);
    if refined {
        for weight in 0..=m.layers()[layer].in_dim() {
            merge_weight_level(m, layer, neuron, weight, ctx, records)?;
        }
    }
    let loss_post = ctx.loss(m)?;
    let action = if loss_post < loss_pre {
        if refined {
            Action::Refined
        } else {
            Action::Merged
        }
    } else {
        m.set_structure(addr, &baseline)?;
        Action::RolledBack
    };
    records.push(DecisionRecord::new(
        addr, diff, case, alpha, action, loss_pre, loss_post,
    ));
    Ok(())
}

/// Fuses a single scalar (index `in_dim` is the bias) with its own α and
/// keeps it only if the loss of `m` strictly drops. Terminal level: the
/// threshold case is recorded but never causes further descent.
pub fn merge_weight_level(
    m: &mut Network,
    layer: usize,
    neuron: usize,
    weight: usize,
    ctx: &MergeContext<'_>,
    records: &mut Vec<DecisionRecord>,
) -> Result<()> {
    let addr = StructureAddress::weight(layer, neuron, weight);
    let baseline = m.get_structure(addr)?;
    let loss_pre = ctx.loss(m)?;
    let (diff, alpha, fused, case) = ctx.evaluate(m, addr)?;
    m.set_structure(addr, &fused)?;
    let loss_post = ctx.loss(m)?;
    let action = if loss_post < loss_pre {
        Action::Merged
    } else {
        m.set_structure(addr, &baseline)?;
        Action::RolledBack
    };
    records.push(DecisionRecord::new(
        addr, diff, case, alpha, action, loss_pre, loss_post,
    ));
    Ok(())
}

/// One back-to-front sweep over all layers of `m` against a prepared
/// evaluation set.
pub fn cogram_pass(m: &Network, ctx: &MergeContext<'_>) -> Result<(Network, IterationReport)> {
    ctx.config.validate()?;
    m.ensure_compatible(ctx.a)?;
    m.ensure_compatible(ctx.b)?;
    let mut work = m.clone();
    let mut records = Vec::new();
    let loss_before = ctx.loss(&work)?;
    for layer in (0..work.num_layers()).rev() {
        merge_layer_level(&mut work, layer, ctx, &mut records)?;
    }
    let loss_after = ctx.loss(&work)?;
    Ok((
        work,
        IterationReport {
            records,
            loss_before,
            loss_after,
        },
    ))
}

/// A single CoGraM sweep with the evaluation set built from `combined`
/// (the concatenated training data of A and B). `config.iterations` is
/// ignored; see [`cogram_iterate`].
pub fn cogram_merge(
    m: &Network,
    a: &Network,
    b: &Network,
    combined: &Dataset,
    config: &MergeConfig,
) -> Result<(Network, MergeReport)> {
    run(m, a, b, combined, config, 1)
}

/// `M⁽ᵏ⁺¹⁾ = CoGraM(M⁽ᵏ⁾, A, B)` for `config.iterations` rounds, always on
/// the latest `M`, against one fixed evaluation set.
pub fn cogram_iterate(
    m0: &Network,
    a: &Network,
    b: &Network,
    combined: &Dataset,
    config: &MergeConfig,
) -> Result<(Network, MergeReport)> {
    run(m0, a, b, combined, config, config.iterations)
}

fn run(
    m0: &Network,
    a: &Network,
    b: &Network,
    combined: &Dataset,
    config: &MergeConfig,
    iterations: usize,
) -> Result<(Network, MergeReport)> {
    let start = Instant::now();
    config.validate()?;
    a.ensure_compatible(b)?;
    m0.ensure_compatible(a)?;
    if combined.is_empty() {
        return Err(Error::Usage("merge needs nonempty training data".into()));
    }
    let eval_set = config.build_eval_set(combined)?;
    let ctx = MergeContext {
        a,
        b,
        eval_set: &eval_set,
        config,
    };
    let mut m = m0.clone();
    let mut reports = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let (next, report) = cogram_pass(&m, &ctx)?;
        log::debug!(
            "cogram iteration {}: loss {:.6} -> {:.6}",
            k + 1,
            report.loss_before,
            report.loss_after
        );
        m = next;
        reports.push(report);
    }
    Ok((
        m,
        MergeReport {
            config: config.clone(),
            iterations: reports,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}
