//! Synthetic classification tasks.
//!
//! Each class gets a random center; each center is split into subclusters by
//! random directional shifts. Samples are drawn around the subcluster means,
//! pushed through an elementwise sine/clamped-tangent distortion and finally
//! perturbed by additive noise. Test splits use a larger additive noise.
//!
//! For subnetwork pairs the class centers are shared (both subnetworks solve
//! the same labelling problem), while subcluster structure and samples come
//! from per-subnetwork seeds.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub subclusters_per_class: usize,
    pub center_scale: f64,
    pub subcluster_shift_scale: f64,
    pub base_noise_sigma: f64,
    pub test_noise_multiplier: f64,
    pub sin_amplitude: f64,
    pub tan_amplitude: f64,
    pub tan_clamp: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            dim: 32,
            samples_per_class: 200,
            subclusters_per_class: 3,
            center_scale: 3.0,
            subcluster_shift_scale: 1.0,
            base_noise_sigma: 0.4,
            test_noise_multiplier: 1.25,
            sin_amplitude: 0.3,
            tan_amplitude: 0.1,
            tan_clamp: 3.0,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("data.{field}: {why}")));
        if self.num_classes < 2 {
            return bad("num_classes", "must be at least 2");
        }
        if self.dim == 0 {
            return bad("dim", "must be at least 1");
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class", "must be at least 1");
        }
        if self.subclusters_per_class == 0 {
            return bad("subclusters_per_class", "must be at least 1");
        }
        for (name, v) in [
            ("center_scale", self.center_scale),
            ("subcluster_shift_scale", self.subcluster_shift_scale),
            ("base_noise_sigma", self.base_noise_sigma),
            ("tan_clamp", self.tan_clamp),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be a positive finite number");
            }
        }
        for (name, v) in [
            ("sin_amplitude", self.sin_amplitude),
            ("tan_amplitude", self.tan_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be a nonnegative finite number");
            }
        }
        if !(self.test_noise_multiplier >= 1.0 && self.test_noise_multiplier.is_finite()) {
            return bad("test_noise_multiplier", "must be at least 1");
        }
        Ok(())
    }

    /// The "mathematically different" generator used for subnetwork B in
    /// heterogeneous pairs.
    pub fn heterogeneous_variant(&self) -> Self {
        Self {
            subclusters_per_class: self.subclusters_per_class + 1,
            base_noise_sigma: self.base_noise_sigma * 1.5,
            sin_amplitude: self.sin_amplitude * 1.5,
            tan_amplitude: self.tan_amplitude * 1.5,
            ..self.clone()
        }
    }

    fn train_noise(&self) -> f64 {
        self.base_noise_sigma * 0.25
    }

    fn test_noise(&self) -> f64 {
        self.train_noise() * self.test_noise_multiplier
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Homogeneous,
    Heterogeneous,
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homogeneous" => Ok(PairMode::Homogeneous),
            "heterogeneous" => Ok(PairMode::Heterogeneous),
            other => Err(Error::Config(format!(
                "mode: expected \"homogeneous\" or \"heterogeneous\", got {other:?}"
            ))),
        }
    }
}

/// Labelled feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            let dim = first.len();
            if let Some(i) = features.iter().position(|r| r.len() != dim) {
                return Err(Error::Shape(format!(
                    "row {i} has {} features, expected {dim}",
                    features[i].len()
                )));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Shape(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> (&[f64], usize) {
        (&self.features[i], self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if !self.is_empty() && !other.is_empty() && self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "cannot concatenate datasets of dim {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut features = self.features.clone();
        features.extend(other.features.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(features, labels, self.num_classes.max(other.num_classes))
    }

    /// Reinterprets labels against a (larger or equal) class count.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Dataset> {
        if let Some(bad) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Shape(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for (x, label) in self.iter() {
            record.clear();
            record.extend(x.iter().map(|v| v.to_string()));
            record.push(label.to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a CSV with header `f0,…,f{d-1},label`. The class count is the
    /// largest label plus one.
    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[n - 1] != "label" {
            return Err(Error::format("header", "last column must be `label`"));
        }
        for (i, h) in header.iter().take(n - 1).enumerate() {
            if h != format!("f{i}") {
                return Err(Error::format(
                    "header",
                    format!("column {i} should be `f{i}`, found `{h}`"),
                ));
            }
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = row_idx + 2;
            if rec.len() != n {
                return Err(Error::format(
                    format!("line {line}"),
                    format!("expected {n} fields, got {}", rec.len()),
                ));
            }
            let x = rec
                .iter()
                .take(n - 1)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            Error::format(
                                format!("line {line}"),
                                format!("bad feature value {s:?}"),
                            )
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = rec[n - 1].parse::<usize>().map_err(|_| {
                Error::format(
                    format!("line {line}"),
                    format!("bad label {:?}", &rec[n - 1]),
                )
            })?;
            features.push(x);
            labels.push(label);
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Dataset::new(features, labels, num_classes)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Sampling structure of one data source: per class, per subcluster mean.
#[derive(Debug, Clone)]
struct Generator {
    cfg: DataConfig,
    means: Vec<Vec<Vec<f64>>>,
}

fn normal_vec(rng: &mut Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn class_centers(cfg: &DataConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..cfg.num_classes)
        .map(|_| normal_vec(&mut rng, cfg.dim, cfg.center_scale))
        .collect()
}

impl Generator {
    fn new(cfg: &DataConfig, centers: &[Vec<f64>], seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let means = centers
            .iter()
            .map(|center| {
                (0..cfg.subclusters_per_class)
                    .map(|_| {
                        let shift = normal_vec(&mut rng, cfg.dim, cfg.subcluster_shift_scale);
                        center.iter().zip(&shift).map(|(c, s)| c + s).collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            cfg: cfg.clone(),
            means,
        }
    }

    fn distort(&self, v: f64) -> f64 {
        let t = v.tan().clamp(-self.cfg.tan_clamp, self.cfg.tan_clamp);
        v + self.cfg.sin_amplitude * v.sin() + self.cfg.tan_amplitude * t
    }

    /// Sample `i` of class `c`; subclusters are visited round-robin.
    fn draw(&self, c: usize, i: usize, noise: f64, rng: &mut Rng) -> Vec<f64> {
        let subclusters = &self.means[c];
        let mean = &subclusters[i % subclusters.len()];
        mean.iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                let e: f64 = StandardNormal.sample(rng);
                self.distort(m + self.cfg.base_noise_sigma * z) + noise * e
            })
            .collect()
    }

    fn sample(&self, per_class: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = seed::rng(seed);
        let mut features = Vec::with_capacity(per_class * self.cfg.num_classes);
        let mut labels = Vec::with_capacity(features.capacity());
        for c in 0..self.cfg.num_classes {
            for i in 0..per_class {
                features.push(self.draw(c, i, noise, &mut rng));
                labels.push(c);
            }
        }
        Dataset {
            features,
            labels,
            num_classes: self.cfg.num_classes,
        }
    }
}

/// A single task: train split and a noisier test split from the same structure.
pub fn generate_task(cfg: &DataConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let centers = class_centers(cfg, seed::derive(cfg.seed, "centers"));
    let generator = Generator::new(cfg, &centers, seed::derive(cfg.seed, "structure"));
    let train = generator.sample(
        cfg.samples_per_class,
        cfg.train_noise(),
        seed::derive(cfg.seed, "train"),
    );
    let test = generator.sample(
        cfg.samples_per_class,
        cfg.test_noise(),
        seed::derive(cfg.seed, "test"),
    );
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    pub a: Dataset,
    pub b: Dataset,
    pub test: Dataset,
}

impl PairData {
    /// A's rows followed by B's rows.
    pub fn combined(&self) -> Dataset {
        self.a.concat(&self.b).expect("pair datasets share dims")
    }
}

/// Training sets for subnetworks A and B plus a shared test set.
///
/// Homogeneous: B uses the same generator parameters as A on its own seeds;
/// the test set is drawn from A's structure. Heterogeneous: B's generator is
/// [`DataConfig::heterogeneous_variant`]; each test class is half A-drawn and
/// half B-drawn.
pub fn generate_pair(cfg: &DataConfig, mode: PairMode) -> Result<PairData> {
    cfg.validate()?;
    let s = cfg.seed;
    let centers = class_centers(cfg, seed::derive(s, "centers"));
    let cfg_b = match mode {
        PairMode::Homogeneous => cfg.clone(),
        PairMode::Heterogeneous => cfg.heterogeneous_variant(),
    };
    let gen_a = Generator::new(cfg, &centers, seed::derive(s, "structure-a"));
    let gen_b = Generator::new(&cfg_b, &centers, seed::derive(s, "structure-b"));
    let a = gen_a.sample(
        cfg.samples_per_class,
        cfg.train_noise(),
        seed::derive(s, "train-a"),
    );
    let b = gen_b.sample(
        cfg_b.samples_per_class,
        cfg_b.train_noise(),
        seed::derive(s, "train-b"),
    );
    let test_seed = seed::derive(s, "test");
    let test = match mode {
        PairMode::Homogeneous => gen_a.sample(cfg.samples_per_class, cfg.test_noise(), test_seed),
        PairMode::Heterogeneous => {
            let mut rng = seed::rng(test_seed);
            let n = cfg.samples_per_class;
            let from_a = n.div_ceil(2);
            let mut features = Vec::with_capacity(n * cfg.num_classes);
            let mut labels = Vec::with_capacity(features.capacity());
            for c in 0..cfg.num_classes {
                for i in 0..n {
                    let x = if i < from_a {
                        gen_a.draw(c, i, cfg.test_noise(), &mut rng)
                    } else {
                        gen_b.draw(c, i - from_a, cfg_b.test_noise(), &mut rng)
                    };
                    features.push(x);
                    labels.push(c);
                }
            }
            Dataset {
                features,
                labels,
                num_classes: cfg.num_classes,
            }
        }
    };
    Ok(PairData { a, b, test })
}
