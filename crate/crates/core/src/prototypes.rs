//! Evaluation sets for merge decisions.
//!
//! Samples are grouped by target (optionally split further with per-class
//! k-means) and each group is compressed to one representative: the
//! elementwise geometric mean of the members' magnitudes, `(∏ (|x| + ε))^(1/n)`.
//! Raw batches skip the compression and use sampled rows directly.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Prototypes,
    RawBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub class: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub mode: EvalMode,
    pub prototypes: Vec<Prototype>,
}

impl PrototypeSet {
    /// Fails on an empty list, ragged vectors, non-finite inputs or targets
    /// that are not probability distributions.
    pub fn new(mode: EvalMode, prototypes: Vec<Prototype>) -> Result<Self> {
        let first = prototypes
            .first()
            .ok_or_else(|| Error::Usage("prototype set is empty".into()))?;
        let (xd, yd) = (first.x.len(), first.y.len());
        for (i, p) in prototypes.iter().enumerate() {
            if p.x.len() != xd || p.y.len() != yd {
                return Err(Error::Shape(format!(
                    "prototype {i} has inconsistent lengths"
                )));
            }
            if p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "prototype {i} has non-finite inputs"
                )));
            }
            let mass: f64 = p.y.iter().sum();
            if p.y.iter().any(|v| v.is_nan() || *v < 0.0) || (mass - 1.0).abs() > 1e-9 {
                return Err(Error::Numeric(format!(
                    "prototype {i} target is not a distribution"
                )));
            }
        }
        Ok(Self { mode, prototypes })
    }

    #[cfg(test)]
    pub(crate) fn empty_for_tests(_input_dim: usize, _classes: usize) -> Self {
        Self {
            mode: EvalMode::RawBatch,
            prototypes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Prototype> {
        self.prototypes.iter()
    }

    pub fn input_dim(&self) -> usize {
        self.prototypes.first().map_or(0, |p| p.x.len())
    }

    pub fn target_dim(&self) -> usize {
        self.prototypes.first().map_or(0, |p| p.y.len())
    }

    /// Every row of `data`, in order, with one-hot targets.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let protos = data
            .iter()
            .map(|(x, c)| Prototype {
                x: x.to_vec(),
                y: one_hot(c, data.num_classes()),
                class: c,
                count: 1,
            })
            .collect();
        Self::new(EvalMode::RawBatch, protos)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prototype set serializes")
    }
}

pub fn one_hot(c: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[c] = 1.0;
    v
}

/// Elementwise geometric mean of `|x| + eps`, computed as `exp(mean(ln(|x| + eps)))`.
pub fn geometric_mean_prototype<S: AsRef<[f64]>>(samples: &[S], eps: f64) -> Result<Vec<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Usage("geometric mean of an empty sample set".into()))?
        .as_ref();
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for s in samples {
        let s = s.as_ref();
        if s.len() != dim {
            return Err(Error::Shape(format!(
                "sample of length {} in a set of length {dim}",
                s.len()
            )));
        }
        for (a, v) in acc.iter_mut().zip(s) {
            *a += (v.abs() + eps).ln();
        }
    }
    let n = samples.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n).exp()).collect())
}

fn rows_by_class(data: &Dataset) -> Vec<Vec<&[f64]>> {
    let mut groups = vec![Vec::new(); data.num_classes()];
    for (x, c) in data.iter() {
        groups[c].push(x);
    }
    groups
}

/// One prototype per present class, ordered by class.
pub fn build_prototypes_onehot(data: &Dataset, eps: f64) -> Result<PrototypeSet> {
    if data.is_empty() {
        return Err(Error::Usage(
            "cannot build prototypes from an empty dataset".into(),
        ));
    }
    let protos = rows_by_class(data)
        .into_iter()
        .enumerate()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(c, rows)| {
            Ok(Prototype {
                x: geometric_mean_prototype(&rows, eps)?,
                y: one_hot(c, data.num_classes()),
                class: c,
                count: rows.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::new(EvalMode::Prototypes, protos)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means on `rows`. Returns the cluster index of every row.
///
/// Init picks `k` distinct rows with the seeded RNG. A cluster that ends up
/// empty is re-seeded with the row farthest from its own centroid (lowest
/// index on ties), which then moves to the empty cluster.
fn lloyd(rows: &[&[f64]], k: usize, seed: u64, max_iters: usize) -> Vec<usize> {
    let n = rows.len();
    let dim = rows[0].len();
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = order[..k].iter().map(|&i| rows[i].to_vec()).collect();
    let mut assign = vec![usize::MAX; n];

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let mut best = 0;
            let mut best_d = sq_dist(row, &centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(row, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assign[i]] > 1)
                .map(|i| (i, sq_dist(rows[i], &centroids[assign[i]])))
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                })
                .map(|(i, _)| i)
                .expect("k <= n leaves a donor cluster");
            counts[assign[far]] -= 1;
            assign[far] = empty;
            counts[empty] = 1;
            changed = true;
        }

        for (j, c) in centroids.iter_mut().enumerate() {
            c.iter_mut().for_each(|v| *v = 0.0);
            for (i, row) in rows.iter().enumerate() {
                if assign[i] == j {
                    for (cv, rv) in c.iter_mut().zip(row.iter()) {
                        *cv += rv;
                    }
                }
            }
            let m = counts[j] as f64;
            c.iter_mut().for_each(|v| *v /= m);
        }
        debug_assert_eq!(centroids[0].len(), dim);

        if !changed {
            break;
        }
    }
    assign
}

/// `k_per_class` prototypes per present class from per-class k-means.
pub fn build_prototypes_kmeans(
    data: &Dataset,
    k_per_class: usize,
    kmeans_seed: u64,
    max_iters: usize,
    eps: f64,
) -> Result<PrototypeSet> {
    if data.is_empty() {
        return Err(Error::Usage(
            "cannot build prototypes from an empty dataset".into(),
        ));
    }
    if k_per_class == 0 {
        return Err(Error::Config("k_per_class must be at least 1".into()));
    }
    let mut protos = Vec::new();
    for (c, rows) in rows_by_class(data).into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k_per_class {
            return Err(Error::Config(format!(
                "class {c} has {} samples, fewer than k_per_class = {k_per_class}",
                rows.len()
            )));
        }
        let assign = if k_per_class == 1 {
            vec![0; rows.len()]
        } else {
            lloyd(
                &rows,
                k_per_class,
                seed::derive(kmeans_seed, &format!("class-{c}")),
                max_iters,
            )
        };
        for j in 0..k_per_class {
            let members: Vec<&[f64]> = rows
                .iter()
                .zip(&assign)
                .filter(|(_, a)| **a == j)
                .map(|(r, _)| *r)
                .collect();
            protos.push(Prototype {
                x: geometric_mean_prototype(&members, eps)?,
                y: one_hot(c, data.num_classes()),
                class: c,
                count: members.len(),
            });
        }
    }
    PrototypeSet::new(EvalMode::Prototypes, protos)
}

/// `batch_size` rows sampled without replacement, raw features, one-hot targets.
pub fn build_raw_batch(data: &Dataset, batch_size: usize, seed: u64) -> Result<PrototypeSet> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::Config(format!(
            "batch size {batch_size} outside 1..={}",
            data.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let (picked, _) = idx.partial_shuffle(&mut rng, batch_size);
    let protos = picked
        .iter()
        .map(|&i| {
            let (x, c) = data.row(i);
            Prototype {
                x: x.to_vec(),
                y: one_hot(c, data.num_classes()),
                class: c,
                count: 1,
            }
        })
        .collect();
    PrototypeSet::new(EvalMode::RawBatch, protos)
}
