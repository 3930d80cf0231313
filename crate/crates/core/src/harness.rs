//! Multi-seed experiment runner: per seed, generate a data pair, train both
//! subnetworks, fuse them with every configured method and score everything
//! on the shared test split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::baseline::{fisher_information, fisher_merge, uniform_average, FisherConfig};
use crate::cogram::{cogram_iterate, gradient_kickoff, KickoffConfig, MergeConfig};
use crate::data::{generate_pair, DataConfig, PairMode};
use crate::error::{Error, Result};
use crate::net::{loss, Activation, Network};
use crate::seed;
use crate::train::{accuracy, train, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "average")]
    Average,
    #[serde(rename = "fisher")]
    Fisher,
    #[serde(rename = "fisher+cogram")]
    FisherCogram,
    #[serde(rename = "fisher+cogram+kickoff")]
    FisherCogramKickoff,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Average,
        Method::Fisher,
        Method::FisherCogram,
        Method::FisherCogramKickoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Average => "average",
            Method::Fisher => "fisher",
            Method::FisherCogram => "fisher+cogram",
            Method::FisherCogramKickoff => "fisher+cogram+kickoff",
        }
    }

    /// Suffix of the method's CSV columns.
    pub fn column(self) -> &'static str {
        match self {
            Method::Average => "average",
            Method::Fisher => "fisher",
            Method::FisherCogram => "fisher_cogram",
            Method::FisherCogramKickoff => "fisher_cogram_kickoff",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            epochs: 30,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub mode: PairMode,
    /// Layer widths including input and output.
    pub arch: Vec<usize>,
    pub activation: Activation,
    pub train: TrainSettings,
    pub fisher: FisherConfig,
    pub merge: MergeConfig,
    pub kickoff: KickoffConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            mode: PairMode::Homogeneous,
            arch: vec![32, 64, 64, 20],
            activation: Activation::Relu,
            train: TrainSettings::default(),
            fisher: FisherConfig::default(),
            merge: MergeConfig::default(),
            kickoff: KickoffConfig::default(),
            methods: vec![Method::Average, Method::Fisher, Method::FisherCogram],
            seeds: (0..10).collect(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.arch.len() < 2 || self.arch.contains(&0) {
            return Err(Error::Config(format!(
                "arch must list at least two positive widths, got {:?}",
                self.arch
            )));
        }
        if self.arch[0] != self.data.dim || *self.arch.last().unwrap() != self.data.num_classes {
            return Err(Error::Config(format!(
                "arch {:?} does not match data.dim {} and data.num_classes {}",
                self.arch, self.data.dim, self.data.num_classes
            )));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        self.data.validate()?;
        self.train.optimizer.validate()?;
        self.merge.validate()?;
        if self.methods.contains(&Method::FisherCogramKickoff) {
            self.kickoff.validate()?;
        }
        Ok(())
    }

    /// Configured methods in canonical order without duplicates.
    pub fn method_set(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }

    fn needs(&self, m: Method) -> bool {
        self.methods.iter().any(|x| *x >= m)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub data_s: f64,
    pub train_s: f64,
    pub average_s: f64,
    pub fisher_s: f64,
    pub cogram_s: f64,
    pub kickoff_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub accuracy: f64,
    /// Loss on the merge evaluation set, where the method defines one.
    pub eval_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub acc_a: Option<f64>,
    pub acc_b: Option<f64>,
    pub methods: Vec<MethodResult>,
    pub timings: Timings,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn accuracy(&self, m: Method) -> Option<f64> {
        self.method(m).map(|r| r.accuracy)
    }
}

/// The full pipeline for one seed. Any stage failure yields a row flagged with
/// the error instead of results.
pub fn run_seed(cfg: &ExperimentConfig, seed_value: u64) -> SweepRow {
    let mut row = SweepRow {
        seed: seed_value,
        acc_a: None,
        acc_b: None,
        methods: Vec::new(),
        timings: Timings::default(),
        error: None,
    };
    if let Err(e) = fill_row(cfg, seed_value, &mut row) {
        log::warn!("seed {seed_value} failed: {e}");
        row.error = Some(e.to_string());
        row.methods.clear();
        row.acc_a = None;
        row.acc_b = None;
    }
    row
}

fn fill_row(cfg: &ExperimentConfig, s: u64, row: &mut SweepRow) -> Result<()> {
    let clock = Instant::now();
    let data_cfg = DataConfig {
        seed: s,
        ..cfg.data.clone()
    };
    let pair = generate_pair(&data_cfg, cfg.mode)?;
    let combined = pair.combined();
    row.timings.data_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let fit = |tag: &str, data| -> Result<Network> {
        let init = Network::random_with(
            &cfg.arch,
            cfg.activation,
            seed::derive(s, &format!("init-{tag}")),
        )?;
        let t = &cfg.train;
        let (net, _) = train(
            &init,
            data,
            &t.optimizer,
            t.epochs,
            t.batch_size,
            seed::derive(s, &format!("train-{tag}")),
        )?;
        Ok(net)
    };
    let a = fit("a", &pair.a)?;
    let b = fit("b", &pair.b)?;
    row.acc_a = Some(accuracy(&a, &pair.test)?);
    row.acc_b = Some(accuracy(&b, &pair.test)?);
    row.timings.train_s = clock.elapsed().as_secs_f64();

    let eval_set = cfg.merge.build_eval_set(&combined)?;
    let eval_loss = |net: &Network| loss(net, &eval_set, cfg.merge.loss);
    let mut push = |method, net: &Network, l: Option<f64>| -> Result<()> {
        if cfg.methods.contains(&method) {
            row.methods.push(MethodResult {
                method,
                accuracy: accuracy(net, &pair.test)?,
                eval_loss: l,
            });
        }
        Ok(())
    };

    if cfg.methods.contains(&Method::Average) {
        let clock = Instant::now();
        let avg = uniform_average(&a, &b)?;
        push(Method::Average, &avg, Some(eval_loss(&avg)?))?;
        row.timings.average_s = clock.elapsed().as_secs_f64();
    }
    if !cfg.needs(Method::Fisher) {
        return Ok(());
    }

    let clock = Instant::now();
    let fcfg = &cfg.fisher;
    let fa = fisher_information(&a, &pair.a, fcfg.sample_cap, seed::derive(s, "fisher-a"))?;
    let fb = fisher_information(&b, &pair.b, fcfg.sample_cap, seed::derive(s, "fisher-b"))?;
    let fisher = fisher_merge(&a, &b, &fa, &fb, fcfg.floor)?;
    push(Method::Fisher, &fisher, Some(eval_loss(&fisher)?))?;
    row.timings.fisher_s = clock.elapsed().as_secs_f64();
    if !cfg.needs(Method::FisherCogram) {
        return Ok(());
    }

    let clock = Instant::now();
    let (merged, report) = cogram_iterate(&fisher, &a, &b, &combined, &cfg.merge)?;
    push(Method::FisherCogram, &merged, report.final_loss())?;
    row.timings.cogram_s = clock.elapsed().as_secs_f64();
    if !cfg.needs(Method::FisherCogramKickoff) {
        return Ok(());
    }

    let clock = Instant::now();
    let kcfg = KickoffConfig {
        seed: seed::derive(s, "kickoff"),
        ..cfg.kickoff.clone()
    };
    let (kicked, _) = gradient_kickoff(&merged, &combined, &kcfg)?;
    push(
        Method::FisherCogramKickoff,
        &kicked,
        Some(eval_loss(&kicked)?),
    )?;
    row.timings.kickoff_s = clock.elapsed().as_secs_f64();
    Ok(())
}

/// Thread count for sweeps: `COGRAM_THREADS` if set to a positive integer,
/// otherwise the machine's parallelism.
pub fn sweep_threads() -> usize {
    std::env::var("COGRAM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub column: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for fewer than two values).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<ColumnSummary>,
    pub wall_time_s: f64,
}

impl SweepResult {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        self.summary.iter().find(|c| c.column == name)
    }

    pub fn to_csv_string(&self) -> String {
        sweep_csv(&self.config, &self.rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep result serializes")
    }

    /// Writes `sweep.csv`, `sweep.json` and `summary.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), self.to_csv_string())?;
        std::fs::write(dir.join("sweep.json"), self.to_json())?;
        std::fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let failed = self.rows.iter().filter(|r| !r.ok()).count();
        let mut out = format!("seeds: {} ({} failed)\n", self.rows.len(), failed);
        for c in &self.summary {
            out.push_str(&format!(
                "{:<28} mean {:.4}  std {:.4}  n {}\n",
                c.column, c.mean, c.std, c.count
            ));
        }
        out
    }
}

/// Runs every configured seed, in parallel up to [`sweep_threads`], and
/// returns rows in seed-list order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect());
    let summary = summarize(cfg, &rows);
    Ok(SweepResult {
        config: cfg.clone(),
        rows,
        summary,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn columns(cfg: &ExperimentConfig) -> Vec<String> {
    let methods = cfg.method_set();
    let mut cols = vec!["acc_A".to_string(), "acc_B".to_string()];
    cols.extend(methods.iter().map(|m| format!("acc_{}", m.column())));
    for m in [Method::Fisher, Method::FisherCogram] {
        if methods.contains(&m) {
            cols.push(format!("loss_{}", m.column()));
        }
    }
    cols
}

fn cell(row: &SweepRow, column: &str) -> Option<f64> {
    match column {
        "acc_A" => row.acc_a,
        "acc_B" => row.acc_b,
        _ => {
            let (kind, suffix) = column.split_once('_')?;
            let m = Method::ALL.into_iter().find(|m| m.column() == suffix)?;
            let r = row.method(m)?;
            match kind {
                "acc" => Some(r.accuracy),
                "loss" => r.eval_loss,
                _ => None,
            }
        }
    }
}

/// `seed,acc_A,acc_B,acc_<method>...,loss_fisher,loss_fisher_cogram,status`,
/// with method columns only for configured methods. Failed rows leave the
/// value cells empty.
pub fn sweep_csv(cfg: &ExperimentConfig, rows: &[SweepRow]) -> String {
    let cols = columns(cfg);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["seed".to_string()];
    header.extend(cols.iter().cloned());
    header.push("status".into());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        let mut rec = vec![row.seed.to_string()];
        rec.extend(
            cols.iter()
                .map(|c| cell(row, c).map_or_else(String::new, |v| v.to_string())),
        );
        rec.push(if row.ok() {
            "ok".into()
        } else {
            "failed".into()
        });
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn summarize(cfg: &ExperimentConfig, rows: &[SweepRow]) -> Vec<ColumnSummary> {
    columns(cfg)
        .into_iter()
        .map(|column| {
            let values: Vec<f64> = rows.iter().filter_map(|r| cell(r, &column)).collect();
            let (mean, std) = mean_std(&values);
            ColumnSummary {
                column,
                count: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
