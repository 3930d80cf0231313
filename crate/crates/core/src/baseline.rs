//! Baseline fusion: plain parameter averaging and diagonal-Fisher-weighted
//! averaging. The Fisher merge is the usual starting point for CoGraM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{backward_batch, softmax, Gradients, LossKind, Network, Target};
use crate::seed;

pub const DEFAULT_FISHER_FLOOR: f64 = 1e-8;
pub const DEFAULT_FISHER_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherConfig {
    pub sample_cap: usize,
    pub floor: f64,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            sample_cap: DEFAULT_FISHER_SAMPLES,
            floor: DEFAULT_FISHER_FLOOR,
        }
    }
}

/// Diagonal Fisher information, shape-congruent with its network.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub values: Gradients,
    pub sample_count: usize,
}

pub fn uniform_average(a: &Network, b: &Network) -> Result<Network> {
    a.ensure_compatible(b)?;
    let mut out = a.clone();
    for ((lo, la), lb) in out.layers_mut().iter_mut().zip(a.layers()).zip(b.layers()) {
        for ((o, x), y) in lo
            .weights_mut()
            .iter_mut()
            .zip(la.weights())
            .zip(lb.weights())
        {
            *o = average(*x, *y);
        }
        for ((o, x), y) in lo.biases_mut().iter_mut().zip(la.biases()).zip(lb.biases()) {
            *o = average(*x, *y);
        }
    }
    Ok(out)
}

#[inline]
fn average(x: f64, y: f64) -> f64 {
    (x + y) * 0.5
}

/// Empirical diagonal Fisher with model-sampled labels: for up to
/// `sample_cap` seeded rows, draw `y ~ p(·|x)` once and accumulate
/// `(∂ log p(y|x) / ∂θ)²`; return the mean.
pub fn fisher_information(
    net: &Network,
    data: &Dataset,
    sample_cap: usize,
    seed: u64,
) -> Result<FisherInfo> {
    if data.is_empty() {
        return Err(Error::Usage(
            "fisher information of an empty dataset".into(),
        ));
    }
    if sample_cap == 0 {
        return Err(Error::Config("fisher sample_cap must be at least 1".into()));
    }
    let mut rng = seed::rng_for(seed, "fisher");
    let n = sample_cap.min(data.len());
    let picked = rand::seq::index::sample(&mut rng, data.len(), n).into_vec();

    let mut acc = Gradients::zeros_like(net);
    for &i in &picked {
        let (x, _) = data.row(i);
        let probs = softmax(&net.forward_one(x)?)?;
        let y = sample_categorical(&probs, rng.random::<f64>());
        let (_, g) = backward_batch(net, [(x, Target::Class(y))], LossKind::CrossEntropy)?;
        for (a, gi) in acc.iter_mut().zip(g.iter()) {
            *a += gi * gi;
        }
    }
    acc.scale(1.0 / n as f64);
    Ok(FisherInfo {
        values: acc,
        sample_count: n,
    })
}

fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// `θ = (F_A θ_A + F_B θ_B) / (F_A + F_B)` per parameter, with both Fisher
/// values floored at `floor`. Equal weights give exactly the plain average.
pub fn fisher_merge(
    a: &Network,
    b: &Network,
    fa: &FisherInfo,
    fb: &FisherInfo,
    floor: f64,
) -> Result<Network> {
    a.ensure_compatible(b)?;
    fa.values.ensure_matches(a)?;
    fb.values.ensure_matches(b)?;
    if floor.is_nan() || floor <= 0.0 {
        return Err(Error::Config(format!(
            "fisher floor must be positive, got {floor}"
        )));
    }
    let mut out = a.clone();
    for (k, layer) in out.layers_mut().iter_mut().enumerate() {
        let (la, lb) = (&a.layers()[k], &b.layers()[k]);
        let (ga, gb) = (&fa.values.layers[k], &fb.values.layers[k]);
        for (i, o) in layer.weights_mut().iter_mut().enumerate() {
            *o = weighted(
                la.weights()[i],
                lb.weights()[i],
                ga.weights[i],
                gb.weights[i],
                floor,
            );
        }
        for (i, o) in layer.biases_mut().iter_mut().enumerate() {
            *o = weighted(
                la.biases()[i],
                lb.biases()[i],
                ga.biases[i],
                gb.biases[i],
                floor,
            );
        }
    }
    Ok(out)
}

#[inline]
fn weighted(x: f64, y: f64, fx: f64, fy: f64, floor: f64) -> f64 {
    let fx = fx.max(floor);
    let fy = fy.max(floor);
    if fx == fy {
        return average(x, y);
    }
    let v = (fx * x + fy * y) / (fx + fy);
    v.clamp(x.min(y), x.max(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fisher_const(net: &Network, v: f64) -> FisherInfo {
        let mut g = Gradients::zeros_like(net);
        g.iter_mut().for_each(|x| *x = v);
        FisherInfo {
            values: g,
            sample_count: 1,
        }
    }

    fn filled(arch: &[usize], v: f64) -> Network {
        let mut n = Network::zeros(arch).unwrap();
        for l in n.layers_mut() {
            l.weights_mut().iter_mut().for_each(|w| *w = v);
            l.biases_mut().iter_mut().for_each(|w| *w = v);
        }
        n
    }

    #[test]
    fn average_cases() {
        let a = Network::random(&[4, 3, 2], 1).unwrap();
        let b = Network::random(&[4, 3, 2], 2).unwrap();
        assert_eq!(uniform_average(&a, &a).unwrap(), a);
        assert_eq!(
            uniform_average(&a, &b).unwrap(),
            uniform_average(&b, &a).unwrap()
        );
        let m = uniform_average(&filled(&[3, 2], 1.0), &filled(&[3, 2], 3.0)).unwrap();
        assert!(m.parameters().iter().all(|p| *p == 2.0));
        assert!(uniform_average(&a, &Network::zeros(&[4, 2]).unwrap()).is_err());
    }

    #[test]
    fn equal_fisher_is_uniform_average() {
        let a = Network::random(&[5, 4, 3], 1).unwrap();
        let b = Network::random(&[5, 4, 3], 2).unwrap();
        let f = fisher_const(&a, 0.37);
        assert_eq!(
            fisher_merge(&a, &b, &f, &f, 1e-8).unwrap(),
            uniform_average(&a, &b).unwrap()
        );
    }

    #[test]
    fn dominant_fisher_selects_its_parameter() {
        let a = filled(&[1, 1], 5.0);
        let b = filled(&[1, 1], -5.0);
        let m = fisher_merge(&a, &b, &fisher_const(&a, 1.0), &fisher_const(&b, 0.0), 1e-8).unwrap();
        let expected = (5.0 - 1e-8 * 5.0) / (1.0 + 1e-8);
        for p in m.parameters() {
            assert!((p - 5.0).abs() < 1e-6);
            assert!((p - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_models_are_a_fixed_point() {
        let a = Network::random(&[5, 4, 3], 9).unwrap();
        let m = fisher_merge(&a, &a, &fisher_const(&a, 0.1), &fisher_const(&a, 0.7), 1e-8).unwrap();
        assert_eq!(m, a);
    }

    #[test]
    fn zero_net_fisher_closed_form() {
        // At uniform predictions ∂log p(y)/∂b_c = 1[y=c] − 1/C, so the output-bias
        // Fisher entries sum to (C−1)/C whatever labels get drawn, and each entry
        // encodes an integer draw count.
        let c = 5usize;
        let net = Network::zeros(&[3, 4, c]).unwrap();
        let data = Dataset::new(
            vec![vec![0.3, -1.0, 2.0]; 40],
            (0..40).map(|i| i % c).collect(),
            c,
        )
        .unwrap();
        let f = fisher_information(&net, &data, 40, 3).unwrap();
        let bias = &f.values.layers[1].biases;
        let cf = c as f64;
        let total: f64 = bias.iter().sum();
        assert!((total - (cf - 1.0) / cf).abs() < 1e-12, "{total}");
        let s = 40.0;
        let mut draws = 0.0;
        for &fc in bias {
            let n_c = (fc * s - s / (cf * cf)) / (1.0 - 2.0 / cf);
            assert!(
                (n_c - n_c.round()).abs() < 1e-9 && n_c.round() >= 0.0,
                "{n_c}"
            );
            draws += n_c.round();
        }
        assert_eq!(draws, s);
        // Hidden units are dead at zero pre-activation.
        assert!(f.values.layers[0].weights.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fisher_is_nonnegative_and_deterministic() {
        let net = Network::random(&[4, 6, 3], 4).unwrap();
        let data = Dataset::new(
            (0..30)
                .map(|i| vec![i as f64 * 0.1, -0.2, 0.5, 1.0])
                .collect(),
            (0..30).map(|i| i % 3).collect(),
            3,
        )
        .unwrap();
        let f1 = fisher_information(&net, &data, 30, 8).unwrap();
        let f2 = fisher_information(&net, &data, 30, 8).unwrap();
        assert_eq!(f1, f2);
        assert!(f1.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        assert_eq!(
            fisher_information(&net, &data, 1000, 8)
                .unwrap()
                .sample_count,
            30
        );
    }

    proptest! {
        #[test]
        fn fisher_merge_is_convex(
            seed in any::<u64>(),
            fa in prop::collection::vec(0.0f64..10.0, 23),
            fb in prop::collection::vec(0.0f64..10.0, 23),
        ) {
            let a = Network::random(&[4, 3, 2], seed).unwrap();
            let b = Network::random(&[4, 3, 2], seed.wrapping_add(1)).unwrap();
            let mut ga = Gradients::zeros_like(&a);
            ga.iter_mut().zip(&fa).for_each(|(g, v)| *g = *v);
            let mut gb = Gradients::zeros_like(&a);
            gb.iter_mut().zip(&fb).for_each(|(g, v)| *g = *v);
            let m = fisher_merge(
                &a, &b,
                &FisherInfo { values: ga, sample_count: 1 },
                &FisherInfo { values: gb, sample_count: 1 },
                1e-8,
            ).unwrap();
            for ((x, y), z) in a.parameters().iter().zip(b.parameters()).zip(m.parameters()) {
                prop_assert!(z >= x.min(y) && z <= x.max(y));
            }
        }
    }
}
