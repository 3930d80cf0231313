//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to
//! stderr so the verdicts show up even when output capture is on.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use cogram::baseline::{fisher_information, fisher_merge, uniform_average};
use cogram::cogram::{
    classify_case, cogram_merge, convex_combine, merge_neuron_level, merge_weight_level,
    mixing_factor, Action, Case, LevelThresholds, MergeConfig, MergeContext, MergeReport,
    Thresholds,
};
use cogram::data::{Dataset, PairMode};
use cogram::harness::{run_sweep, ExperimentConfig, Method, SweepResult};
use cogram::net::{
    backward, cross_entropy_loss, Activation, Granularity, LossKind, Network, ParamBlock,
};
use cogram::prototypes::{
    build_prototypes_onehot, geometric_mean_prototype, EvalMode, Prototype, PrototypeSet,
};
use cogram::seed::{self, Rng};
use rand::Rng as _;

fn verdict(n: usize, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "acceptance criterion {n:>2}: {} | {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn bits(net: &Network) -> Vec<u64> {
    net.parameters().iter().map(|p| p.to_bits()).collect()
}

fn random_rows(rng: &mut Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn random_dataset(rng: &mut Rng, arch: &[usize], per_class: usize) -> Dataset {
    let classes = *arch.last().unwrap();
    let n = per_class * classes;
    Dataset::new(
        random_rows(rng, n, arch[0]),
        (0..n).map(|i| i % classes).collect(),
        classes,
    )
    .unwrap()
}

fn random_arch(rng: &mut Rng) -> Vec<usize> {
    let hidden = rng.random_range(1..=3);
    let mut arch = vec![rng.random_range(2..=6)];
    arch.extend((0..hidden).map(|_| rng.random_range(2..=8)));
    arch.push(rng.random_range(2..=5));
    arch
}

/// `(M, A, B, data)` with `M` the Fisher merge of two independently
/// initialized networks.
fn random_trio(s: u64) -> (Network, Network, Network, Dataset) {
    let mut rng = seed::rng_for(s, "trio");
    let arch = random_arch(&mut rng);
    let a = Network::random(&arch, seed::derive(s, "a")).unwrap();
    let b = Network::random(&arch, seed::derive(s, "b")).unwrap();
    let data = random_dataset(&mut rng, &arch, 4);
    let fa = fisher_information(&a, &data, 64, 1).unwrap();
    let fb = fisher_information(&b, &data, 64, 2).unwrap();
    let m = fisher_merge(&a, &b, &fa, &fb, 1e-8).unwrap();
    (m, a, b, data)
}

fn set_parameters(net: &mut Network, values: &[f64]) {
    let mut it = values.iter();
    for layer in net.layers_mut() {
        for w in layer.weights_mut() {
            *w = *it.next().unwrap();
        }
        for b in layer.biases_mut() {
            *b = *it.next().unwrap();
        }
    }
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let shapes: [&[usize]; 3] = [&[4, 3, 2], &[8, 8, 5], &[32, 16, 20]];
    let h = 1e-5;
    let (mut checked, mut worst, mut failures) = (0usize, 0.0f64, 0usize);
    for k in 0..20u64 {
        let arch = shapes[k as usize % 3];
        let act = if k % 2 == 0 {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let net = Network::random_with(arch, act, seed::derive(k, "grad-net")).unwrap();
        let mut rng = seed::rng_for(k, "grad-data");
        let classes = *arch.last().unwrap();
        let prototypes = random_rows(&mut rng, 2 * classes, arch[0])
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut y: Vec<f64> = (0..classes).map(|_| rng.random_range(0.0..1.0)).collect();
                if i % 2 == 0 {
                    y.iter_mut()
                        .enumerate()
                        .for_each(|(c, v)| *v = f64::from(u8::from(c == i % classes)));
                }
                let total: f64 = y.iter().sum();
                y.iter_mut().for_each(|v| *v /= total);
                Prototype {
                    x,
                    y,
                    class: i % classes,
                    count: 1,
                }
            })
            .collect();
        let set = PrototypeSet::new(EvalMode::RawBatch, prototypes).unwrap();
        let (_, grads) = backward(&net, &set, LossKind::CrossEntropy).unwrap();
        let analytic = grads.to_vec();
        let params = net.parameters();
        let mut probe = net.clone();
        for (i, &g) in analytic.iter().enumerate() {
            let mut shifted = params.clone();
            shifted[i] = params[i] + h;
            set_parameters(&mut probe, &shifted);
            let up = cross_entropy_loss(&probe, &set).unwrap();
            shifted[i] = params[i] - h;
            set_parameters(&mut probe, &shifted);
            let down = cross_entropy_loss(&probe, &set).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let scale = g.abs().max(numeric.abs());
            let rel = if scale == 0.0 {
                0.0
            } else {
                (g - numeric).abs() / scale
            };
            worst = worst.max(rel);
            if rel > 1e-5 {
                failures += 1;
            }
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures == 0 && secs < 10.0;
    verdict(
        1,
        pass,
        format!("{checked} parameters, {failures} above 1e-5, worst relative error {worst:.2e}, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_equation_suite() {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let mut rng = seed::rng_for(2, "equations");

    check(
        [0.01, 1.0, 5.5, 1e3]
            .iter()
            .all(|l| mixing_factor(0.0, *l) == 0.5),
        "alpha(0) = 0.5",
    );
    let mut worst_sym = 0.0f64;
    for _ in 0..1000 {
        let d: f64 = rng.random_range(-10.0..10.0);
        worst_sym = worst_sym.max((mixing_factor(d, 5.5) + mixing_factor(-d, 5.5) - 1.0).abs());
    }
    check(worst_sym <= 1e-15, "alpha symmetry");

    for _ in 0..200 {
        let n = rng.random_range(1..20);
        let a = ParamBlock((0..n).map(|_| rng.random_range(-50.0..50.0)).collect());
        let b = ParamBlock((0..n).map(|_| rng.random_range(-50.0..50.0)).collect());
        let alpha = rng.random_range(0.0..=1.0);
        let c = convex_combine(&a, &b, alpha).unwrap();
        let inside =
            c.0.iter()
                .zip(a.0.iter().zip(&b.0))
                .all(|(z, (x, y))| *z >= x.min(*y) && *z <= x.max(*y));
        check(inside, "convex bounds");
        check(
            convex_combine(&a, &b, 1.0).unwrap() == a,
            "alpha = 1 endpoint",
        );
        check(
            convex_combine(&a, &b, 0.0).unwrap() == b,
            "alpha = 0 endpoint",
        );
    }

    for (lo, hi) in [
        (0.0, 0.0),
        (0.0, f64::INFINITY),
        (0.01, 1.0),
        (0.5, 0.5),
        (2.0, 7.5),
    ] {
        for d in [lo, -lo, hi, -hi] {
            if d.is_finite() {
                check(
                    classify_case(d, lo, hi).unwrap() == Case::Direct,
                    "boundary is case 3",
                );
            }
        }
        if lo > 0.0 {
            check(
                classify_case(lo * 0.999, lo, hi).unwrap() == Case::Uncertain,
                "below tau_min",
            );
        }
        if hi.is_finite() {
            check(
                classify_case(hi * 1.001 + 1e-12, lo, hi).unwrap() == Case::TooCoarse,
                "above tau_max",
            );
        }
    }

    let mut worst_gm = 0.0f64;
    for _ in 0..300 {
        let count = rng.random_range(1..=8);
        let dim = rng.random_range(1..6);
        let eps = 1e-6;
        let samples: Vec<Vec<f64>> = (0..count)
            .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let got = geometric_mean_prototype(&samples, eps).unwrap();
        for j in 0..dim {
            let product: f64 = samples.iter().map(|s| s[j].abs() + eps).product();
            let direct = product.powf(1.0 / count as f64);
            worst_gm = worst_gm.max((got[j] - direct).abs() / direct);
        }
    }
    check(worst_gm <= 1e-10, "geometric mean vs direct product");

    let uniform = Network::zeros(&[32, 20]).unwrap();
    let rows = random_rows(&mut rng, 40, 32);
    let data = Dataset::new(rows, (0..40).map(|i| i % 20).collect(), 20).unwrap();
    let ce = cross_entropy_loss(&uniform, &build_prototypes_onehot(&data, 1e-6).unwrap()).unwrap();
    // ln 20 to 20 significant digits.
    check(
        (ce - 2.995_732_273_553_991).abs() <= 1e-12,
        "uniform cross-entropy = ln 20",
    );

    let pass = failures.is_empty();
    verdict(
        2,
        pass,
        format!(
            "symmetry error {worst_sym:.1e}, geometric-mean error {worst_gm:.1e}, uniform CE {ce:.15}{}",
            if pass { String::new() } else { format!(", failed: {failures:?}") }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_identity_fusion() {
    let start = Instant::now();
    let mut violations = 0usize;
    let mut runs = 0usize;
    for s in 0..50u64 {
        let (m, a, _, data) = random_trio(1000 + s);
        for max in [Granularity::Layer, Granularity::Neuron, Granularity::Weight] {
            for t in [Thresholds::DIRECT, Thresholds::new(1.0, 2.0).unwrap()] {
                let cfg = MergeConfig {
                    max_granularity: max,
                    thresholds: LevelThresholds::uniform(t),
                    ..MergeConfig::default()
                };
                let (out, _) = cogram_merge(&m, &a, &a, &data, &cfg).unwrap();
                let worst = out
                    .parameters()
                    .iter()
                    .zip(a.parameters())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if worst > 1e-15 {
                    violations += 1;
                }
                runs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = violations == 0 && secs < 30.0;
    verdict(
        3,
        pass,
        format!("{runs} merges, {violations} differ from A, {secs:.2} s"),
    );
    assert!(pass);
}

type OracleLayer = (Vec<Vec<f64>>, Vec<f64>, Activation);

/// Straight-line forward pass and mean cross-entropy, written independently
/// of the library's evaluation code but with the same summation order.
fn oracle_loss(layers: &[OracleLayer], set: &PrototypeSet) -> f64 {
    let mut total = 0.0;
    for p in set.iter() {
        let mut act = p.x.clone();
        for (rows, biases, f) in layers {
            let mut next = Vec::with_capacity(rows.len());
            for (row, b) in rows.iter().zip(biases) {
                let mut z = *b;
                for (w, x) in row.iter().zip(&act) {
                    z += w * x;
                }
                next.push(match f {
                    Activation::Relu => z.max(0.0),
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                });
            }
            act = next;
        }
        let max = act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in &act {
            sum += (z - max).exp();
        }
        let lse = max + sum.ln();
        let mut l = 0.0;
        for (y, z) in p.y.iter().zip(&act) {
            if *y != 0.0 {
                l += y * (lse - z);
            }
        }
        total += l;
    }
    total / set.len() as f64
}

fn oracle_layers(net: &Network) -> Vec<OracleLayer> {
    net.layers()
        .iter()
        .map(|l| {
            (
                l.rows().map(|r| r.to_vec()).collect(),
                l.biases().to_vec(),
                l.activation(),
            )
        })
        .collect()
}

#[test]
fn criterion_04_layer_oracle() {
    let mut mismatches = 0usize;
    for s in 0..10u64 {
        let (m, a, b, data) = random_trio(4000 + s);
        let (merged, _) = cogram_merge(&m, &a, &b, &data, &MergeConfig::default()).unwrap();

        let set = build_prototypes_onehot(&data, 1e-6).unwrap();
        let (la, lb) = (oracle_layers(&a), oracle_layers(&b));
        let mut work = oracle_layers(&m);
        for k in (0..work.len()).rev() {
            let mut with_a = work.clone();
            with_a[k] = la[k].clone();
            let mut with_b = work.clone();
            with_b[k] = lb[k].clone();
            let delta = oracle_loss(&with_a, &set) - oracle_loss(&with_b, &set);
            let alpha = 1.0 / (1.0 + (5.5 * delta).exp());
            let (rows, biases, _) = &mut work[k];
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, w) in row.iter_mut().enumerate() {
                    *w = alpha * la[k].0[i][j] + (1.0 - alpha) * lb[k].0[i][j];
                }
                biases[i] = alpha * la[k].1[i] + (1.0 - alpha) * lb[k].1[i];
            }
        }
        let expected: Vec<u64> = work
            .iter()
            .flat_map(|(rows, biases, _)| {
                rows.iter()
                    .flatten()
                    .chain(biases)
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect();
        if expected != bits(&merged) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    verdict(
        4,
        pass,
        format!("10 trios, {mismatches} differ bitwise from the oracle"),
    );
    assert!(pass);
}

fn report_chain_violations(report: &MergeReport) -> usize {
    let mut bad = 0;
    for it in &report.iterations {
        let recs = &it.records;
        for (i, r) in recs.iter().enumerate() {
            if r.level == Granularity::Layer {
                continue;
            }
            let (pre, settled) = (r.loss_pre.unwrap(), r.settled_loss().unwrap());
            if settled > pre {
                bad += 1;
            }
            if r.action == Action::RolledBack && r.loss_post.unwrap() < pre {
                bad += 1;
            }
            let Some(next) = recs.get(i + 1) else {
                continue;
            };
            let same_neuron = next.layer == r.layer && next.neuron == r.neuron;
            match (r.level, next.level) {
                (Granularity::Weight, Granularity::Weight)
                    if same_neuron && next.loss_pre.unwrap().to_bits() != settled.to_bits() =>
                {
                    bad += 1;
                }
                (Granularity::Weight, Granularity::Neuron)
                    if same_neuron && next.loss_post.unwrap().to_bits() != settled.to_bits() =>
                {
                    bad += 1;
                }
                _ => {}
            }
        }
        // Successive neurons of a layer chain through their settled losses.
        let neurons: Vec<_> = recs
            .iter()
            .filter(|r| r.level == Granularity::Neuron)
            .collect();
        for w in neurons.windows(2) {
            if w[0].layer == w[1].layer
                && w[1].loss_pre.unwrap().to_bits() != w[0].settled_loss().unwrap().to_bits()
            {
                bad += 1;
            }
        }
    }
    bad
}

#[test]
fn criterion_05_rollback_monotonicity() {
    let (mut chain_bad, mut restore_bad, mut rollbacks, mut records) =
        (0usize, 0usize, 0usize, 0usize);
    for s in 0..20u64 {
        let (m, a, b, data) = random_trio(5000 + s);
        let mut rng = seed::rng_for(s, "thresholds");
        let lo = rng.random_range(0.0..0.01);
        let t = Thresholds::new(lo, lo + rng.random_range(0.0..0.05)).unwrap();
        let cfg = MergeConfig {
            max_granularity: Granularity::Weight,
            thresholds: LevelThresholds {
                layer: Thresholds::new(1e9, 1e9).unwrap(),
                neuron: t,
                weight: t,
            },
            ..MergeConfig::default()
        };
        let (_, report) = cogram_merge(&m, &a, &b, &data, &cfg).unwrap();
        chain_bad += report_chain_violations(&report);
        records += report
            .records()
            .filter(|r| r.level != Granularity::Layer)
            .count();

        // Direct calls with parameter snapshots around every neuron and weight.
        let set = cfg.build_eval_set(&data).unwrap();
        let ctx = MergeContext {
            a: &a,
            b: &b,
            eval_set: &set,
            config: &cfg,
        };
        let mut work = m.clone();
        for layer in (0..work.num_layers()).rev() {
            for neuron in 0..work.layers()[layer].out_dim() {
                let before = bits(&work);
                let mut recs = Vec::new();
                merge_neuron_level(&mut work, layer, neuron, &ctx, &mut recs).unwrap();
                if recs.last().unwrap().action == Action::RolledBack {
                    rollbacks += 1;
                    restore_bad += usize::from(bits(&work) != before);
                }
                for weight in 0..=work.layers()[layer].in_dim() {
                    let before = bits(&work);
                    let mut recs = Vec::new();
                    merge_weight_level(&mut work, layer, neuron, weight, &ctx, &mut recs).unwrap();
                    if recs[0].action == Action::RolledBack {
                        rollbacks += 1;
                        restore_bad += usize::from(bits(&work) != before);
                    }
                }
            }
        }
    }
    let pass = chain_bad == 0 && restore_bad == 0;
    verdict(
        5,
        pass,
        format!(
            "{records} neuron/weight records, {chain_bad} loss increases; {rollbacks} direct rollbacks, {restore_bad} not bit-identical"
        ),
    );
    assert!(pass);
}

fn sweep_config(mode: PairMode, methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        methods,
        seeds: (0..10).collect(),
        ..ExperimentConfig::default()
    }
}

fn homogeneous_config() -> ExperimentConfig {
    sweep_config(PairMode::Homogeneous, Method::ALL.to_vec())
}

fn heterogeneous_config() -> ExperimentConfig {
    sweep_config(
        PairMode::Heterogeneous,
        vec![Method::Average, Method::Fisher, Method::FisherCogram],
    )
}

fn homogeneous_sweep() -> &'static SweepResult {
    static CELL: OnceLock<SweepResult> = OnceLock::new();
    CELL.get_or_init(|| run_sweep(&homogeneous_config()).unwrap())
}

fn heterogeneous_sweep() -> &'static SweepResult {
    static CELL: OnceLock<SweepResult> = OnceLock::new();
    CELL.get_or_init(|| run_sweep(&heterogeneous_config()).unwrap())
}

fn ordering_check(n: usize, label: &str, sweep: &SweepResult) {
    let ok_rows = sweep.rows.iter().filter(|r| r.ok()).count();
    let fisher = sweep.column("acc_fisher").unwrap().mean;
    let cogram = sweep.column("acc_fisher_cogram").unwrap().mean;
    let per_seed: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| {
            format!(
                "{:.3}/{:.3}",
                r.accuracy(Method::Fisher).unwrap_or(f64::NAN),
                r.accuracy(Method::FisherCogram).unwrap_or(f64::NAN)
            )
        })
        .collect();
    let pass = ok_rows == sweep.rows.len() && cogram > fisher;
    verdict(
        n,
        pass,
        format!(
            "{label}: mean acc fisher {fisher:.4}, fisher+cogram {cogram:.4}, sweep {:.0} s; per seed fisher/cogram {}",
            sweep.wall_time_s,
            per_seed.join(" ")
        ),
    );
    assert!(
        pass,
        "fisher+cogram mean {cogram} does not exceed fisher mean {fisher}"
    );
}

#[test]
fn criterion_06_homogeneous_ordering() {
    ordering_check(6, "homogeneous", homogeneous_sweep());
}

#[test]
fn criterion_07_heterogeneous_ordering() {
    ordering_check(7, "heterogeneous", heterogeneous_sweep());
}

#[test]
fn criterion_08_kickoff_above_subnetworks() {
    let sweep = homogeneous_sweep();
    let k = &sweep.config.kickoff;
    assert_eq!(
        (k.kickoff_epochs, k.finetune_epochs, k.lr_multiplier),
        (8, 20, 2.5)
    );
    let wins = sweep
        .rows
        .iter()
        .filter(
            |r| match (r.accuracy(Method::FisherCogramKickoff), r.acc_a, r.acc_b) {
                (Some(m), Some(a), Some(b)) => m >= a.max(b),
                _ => false,
            },
        )
        .count();
    let share = wins as f64 / sweep.rows.len() as f64;
    let pass = share >= 0.6;
    let mean = sweep.column("acc_fisher_cogram_kickoff").unwrap().mean;
    let note = if pass {
        String::new()
    } else {
        " (soft criterion: recorded, not enforced)".to_string()
    };
    verdict(
        8,
        pass,
        format!(
            "kickoff >= max(acc_A, acc_B) in {wins}/{} seeds, mean kickoff acc {mean:.4}{note}",
            sweep.rows.len()
        ),
    );
}

#[test]
fn criterion_09_sweep_determinism() {
    let first_hom = homogeneous_sweep().to_csv_string();
    let first_het = heterogeneous_sweep().to_csv_string();
    let again_hom = run_sweep(&homogeneous_config()).unwrap().to_csv_string();
    let again_het = run_sweep(&heterogeneous_config()).unwrap().to_csv_string();
    let pass = first_hom == again_hom && first_het == again_het;
    verdict(
        9,
        pass,
        format!(
            "homogeneous csv identical: {}, heterogeneous csv identical: {} ({} + {} bytes)",
            first_hom == again_hom,
            first_het == again_het,
            first_hom.len(),
            first_het.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_format_fidelity() {
    let (mut model_bad, mut report_bad) = (0usize, 0usize);
    for s in 0..100u64 {
        let (m, a, b, data) = random_trio(10_000 + s);
        let mut a = a;
        let mut rng = seed::rng_for(s, "extremes");
        let mut params = a.parameters();
        for p in params.iter_mut() {
            *p *= [1.0, 1e-300, 1e300, 1.0 / 3.0, -1.0][rng.random_range(0..5)];
        }
        params[0] = -0.0;
        params[1] = f64::MIN_POSITIVE / 4.0;
        set_parameters(&mut a, &params);
        let back = Network::from_json(&a.to_json()).unwrap();
        model_bad += usize::from(bits(&back) != bits(&a) || back != a);

        let b_fixed = uniform_average(&b, &m).unwrap();
        let cfg = MergeConfig {
            max_granularity: Granularity::Weight,
            thresholds: LevelThresholds {
                layer: Thresholds::new(1e9, 1e9).unwrap(),
                neuron: Thresholds::new(0.0, 0.01).unwrap(),
                weight: Thresholds::DIRECT,
            },
            ..MergeConfig::default()
        };
        let (_, report) = cogram_merge(&m, &b_fixed, &b, &data, &cfg).unwrap();
        let text = report.to_json();
        let parsed = MergeReport::from_json(&text).unwrap();
        report_bad += usize::from(parsed != report || parsed.to_json() != text);
    }
    let pass = model_bad == 0 && report_bad == 0;
    verdict(
        10,
        pass,
        format!(
            "100 models: {model_bad} round-trip mismatches; 100 reports: {report_bad} mismatches"
        ),
    );
    assert!(pass);
}

/// Not an acceptance criterion: the same homogeneous comparison with the
/// merge evaluated on a raw batch of training rows instead of one-hot
/// prototypes, printed for context.
#[test]
fn diagnostic_raw_batch_evaluation() {
    let mut cfg = sweep_config(
        PairMode::Homogeneous,
        vec![Method::Fisher, Method::FisherCogram],
    );
    cfg.merge.eval = "batch:256".parse().unwrap();
    let sweep = run_sweep(&cfg).unwrap();
    let fisher = sweep.column("acc_fisher").unwrap().mean;
    let cogram = sweep.column("acc_fisher_cogram").unwrap().mean;
    let line = format!(
        "diagnostic (not a criterion): homogeneous, raw batch of 256 rows as eval set: mean acc fisher {fisher:.4}, fisher+cogram {cogram:.4}\n"
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}
