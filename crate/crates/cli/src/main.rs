use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cogram::baseline::{
    fisher_information, fisher_merge, uniform_average, DEFAULT_FISHER_FLOOR, DEFAULT_FISHER_SAMPLES,
};
use cogram::cogram::{
    cogram_iterate, gradient_kickoff, EvalSpec, KickoffConfig, LevelThresholds, MergeConfig,
    Thresholds,
};
use cogram::data::{generate_pair, DataConfig, Dataset, PairMode};
use cogram::harness::{run_sweep, ExperimentConfig};
use cogram::net::{loss, parse_arch, Activation, Granularity, LossKind, Network};
use cogram::prototypes::PrototypeSet;
use cogram::train::{accuracy, train, OptimizerConfig, OptimizerKind};
use cogram::{seed, Error};

#[derive(Parser)]
#[command(
    name = "cogram",
    version,
    about = "Train, merge and evaluate dense classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the A, B and test splits of a synthetic task pair.
    GenData(GenDataArgs),
    /// Train a network on a CSV dataset.
    Train(TrainArgs),
    /// Fuse two trained networks.
    Merge(MergeArgs),
    /// Report accuracy and mean cross-entropy of a model on a dataset.
    Eval(EvalArgs),
    /// Run a multi-seed experiment from a TOML config.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// TOML file with a `[data]` table and an optional `mode`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the mode from the config file.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Layer widths including input and output.
    #[arg(long, default_value = "32,64,64,20")]
    arch: String,
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional held-out set scored after training.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training report path; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MergeMethod {
    Average,
    Fisher,
    Cogram,
    #[value(name = "fisher+cogram")]
    FisherCogram,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long, value_enum)]
    method: MergeMethod,
    /// Starting network for cogram: `average`, `fisher` or a model file.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long)]
    model_b: PathBuf,
    #[arg(long)]
    data_a: Option<PathBuf>,
    #[arg(long)]
    data_b: Option<PathBuf>,
    #[arg(long, default_value_t = 5.5)]
    lambda: f64,
    #[arg(long, default_value = "layer")]
    granularity: String,
    #[arg(long, default_value_t = 0.0)]
    tau_min: f64,
    /// Accepts `inf`.
    #[arg(long, default_value_t = f64::INFINITY)]
    tau_max: f64,
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// `onehot`, `kmeans:K` or `batch:N`.
    #[arg(long, default_value = "onehot")]
    prototype: String,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long)]
    mse: bool,
    #[arg(long, default_value_t = DEFAULT_FISHER_SAMPLES)]
    fisher_samples: usize,
    #[arg(long, default_value_t = DEFAULT_FISHER_FLOOR)]
    fisher_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    kickoff: KickoffArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct KickoffArgs {
    /// Run a gradient kickoff and fine-tuning on the combined data afterwards.
    #[arg(long)]
    kickoff: bool,
    #[arg(long, default_value_t = 8)]
    kickoff_epochs: usize,
    #[arg(long, default_value_t = 20)]
    finetune_epochs: usize,
    /// Fine-tuning learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 2.5)]
    lr_mult: f64,
    #[arg(long, default_value = "adam")]
    kickoff_optimizer: String,
    #[arg(long, default_value_t = 64)]
    kickoff_batch_size: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default)]
struct GenDataFile {
    data: DataConfig,
    mode: Option<PairMode>,
}

#[derive(Serialize)]
struct Metrics {
    accuracy: f64,
    loss: f64,
    rows: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Joins the error chain, skipping causes already quoted by the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut previous = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if previous.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
        previous = text;
    }
    out
}

/// 2 for bad input or configuration, 1 for failures while running.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if !err.is_usage() => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Merge(a) => merge(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("cannot read {}", path.display()))
}

fn load_model(path: &Path) -> Result<Network> {
    Network::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load_csv(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text)
        .map_err(Error::from)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Usage(msg.into()).into()
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let file: GenDataFile = match &args.config {
        Some(path) => toml::from_str(&read_text(path)?)
            .map_err(|e| Error::Config(e.to_string()))
            .with_context(|| format!("parsing {}", path.display()))?,
        None => GenDataFile::default(),
    };
    let mode = match &args.mode {
        Some(m) => m.parse()?,
        None => file.mode.unwrap_or(PairMode::Homogeneous),
    };
    let pair = generate_pair(&file.data, mode)?;
    std::fs::create_dir_all(&args.out)
        .map_err(Error::from)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    for (name, data) in [
        ("a.csv", &pair.a),
        ("b.csv", &pair.b),
        ("test.csv", &pair.test),
    ] {
        let path = args.out.join(name);
        data.save_csv(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        println!(
            "{}: {} rows, {} features, {} classes",
            path.display(),
            data.len(),
            data.dim(),
            data.num_classes()
        );
    }
    Ok(())
}

fn optimizer(
    kind: &str,
    lr: f64,
    momentum: f64,
    clip_norm: Option<f64>,
) -> Result<OptimizerConfig> {
    let kind: OptimizerKind = kind.parse()?;
    let cfg = OptimizerConfig {
        kind,
        learning_rate: lr,
        momentum,
        clip_norm,
        ..OptimizerConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let arch = parse_arch(&args.arch)?;
    let activation: Activation = args.activation.parse()?;
    let opt = optimizer(&args.optimizer, args.lr, args.momentum, args.clip_norm)?;
    let init = Network::random_with(&arch, activation, args.seed)?;
    let (net, mut report) = train(&init, &data, &opt, args.epochs, args.batch_size, args.seed)?;
    if let Some(test) = &args.test {
        report.test_accuracy = Some(accuracy(&net, &load_data(test)?)?);
    }
    net.save(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    let report_path = args
        .report
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    write_json(&report_path, &report)?;
    println!(
        "trained {} epochs: train accuracy {:.4}{}",
        args.epochs,
        report.train_accuracy,
        report
            .test_accuracy
            .map_or_else(String::new, |t| format!(", test accuracy {t:.4}"))
    );
    Ok(())
}

fn merge(args: MergeArgs) -> Result<()> {
    let a = load_model(&args.model_a)?;
    let b = load_model(&args.model_b)?;
    a.ensure_compatible(&b)
        .context("models A and B cannot be merged")?;

    let uses_cogram = matches!(args.method, MergeMethod::Cogram | MergeMethod::FisherCogram);
    let init = match (args.method, args.init.as_deref()) {
        (MergeMethod::Cogram, None) => {
            return Err(usage(
                "--method cogram needs a starting network: pass --init average, --init fisher or --init <model.json>",
            ))
        }
        (MergeMethod::Cogram, Some(init)) => Some(init),
        (MergeMethod::FisherCogram, _) | (MergeMethod::Fisher, _) => Some("fisher"),
        (MergeMethod::Average, _) => Some("average"),
    };
    let needs_data = uses_cogram || init == Some("fisher") || args.kickoff.kickoff;
    let (data_a, data_b) = match (&args.data_a, &args.data_b) {
        (Some(x), Some(y)) => (Some(load_data(x)?), Some(load_data(y)?)),
        _ if needs_data => return Err(usage("this merge needs --data-a and --data-b")),
        _ => (None, None),
    };

    let start = match init {
        Some("average") => uniform_average(&a, &b)?,
        Some("fisher") => {
            let (da, db) = (data_a.as_ref().unwrap(), data_b.as_ref().unwrap());
            let fa = fisher_information(
                &a,
                da,
                args.fisher_samples,
                seed::derive(args.seed, "fisher-a"),
            )?;
            let fb = fisher_information(
                &b,
                db,
                args.fisher_samples,
                seed::derive(args.seed, "fisher-b"),
            )?;
            fisher_merge(&a, &b, &fa, &fb, args.fisher_floor)?
        }
        Some(path) => load_model(Path::new(path))?,
        None => unreachable!(),
    };

    let combined = match (&data_a, &data_b) {
        (Some(x), Some(y)) => Some(x.concat(y)?),
        _ => None,
    };
    let mut merged = start;
    if uses_cogram {
        let cfg = merge_config(&args)?;
        let (m, report) = cogram_iterate(&merged, &a, &b, combined.as_ref().unwrap(), &cfg)?;
        if let Some(path) = &args.report {
            report
                .save(path)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        log::info!(
            "cogram: eval loss {:.6} -> {:.6}",
            report.initial_loss().unwrap_or(f64::NAN),
            report.final_loss().unwrap_or(f64::NAN)
        );
        merged = m;
    } else if args.report.is_some() {
        log::warn!("--report is only written for cogram merges");
    }

    if args.kickoff.kickoff {
        let k = &args.kickoff;
        let cfg = KickoffConfig {
            optimizer: k.kickoff_optimizer.parse()?,
            base_lr: k.lr,
            lr_multiplier: k.lr_mult,
            kickoff_epochs: k.kickoff_epochs,
            finetune_epochs: k.finetune_epochs,
            batch_size: k.kickoff_batch_size,
            seed: seed::derive(args.seed, "kickoff"),
            ..KickoffConfig::default()
        };
        let (m, report) = gradient_kickoff(&merged, combined.as_ref().unwrap(), &cfg)?;
        log::info!(
            "kickoff: final train accuracy {:.4}",
            report.finetune.train_accuracy
        );
        merged = m;
    }

    merged
        .save(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn merge_config(args: &MergeArgs) -> Result<MergeConfig> {
    let granularity: Granularity = args.granularity.parse()?;
    let eval = match args.prototype.parse()? {
        EvalSpec::Kmeans {
            k_per_class,
            max_iters,
            ..
        } => EvalSpec::Kmeans {
            k_per_class,
            seed: args.seed,
            max_iters,
        },
        EvalSpec::Batch { size, .. } => EvalSpec::Batch {
            size,
            seed: args.seed,
        },
        other => other,
    };
    let cfg = MergeConfig {
        lambda: args.lambda,
        thresholds: LevelThresholds::uniform(Thresholds::new(args.tau_min, args.tau_max)?),
        max_granularity: granularity,
        epsilon: args.epsilon,
        eval,
        iterations: args.iterations,
        loss: if args.mse {
            LossKind::Mse
        } else {
            LossKind::CrossEntropy
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn eval(args: EvalArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = load_data(&args.data)?;
    let metrics = Metrics {
        accuracy: accuracy(&net, &data)?,
        loss: loss(
            &net,
            &PrototypeSet::from_dataset(&data)?,
            LossKind::CrossEntropy,
        )?,
        rows: data.len(),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).map_err(Error::from)?
    );
    if let Some(path) = &args.out {
        write_json(path, &metrics)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let out = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| usage("sweep needs --out or out_dir in the config"))?;
    let result = run_sweep(&cfg)?;
    result
        .write(&out)
        .with_context(|| format!("cannot write results to {}", out.display()))?;
    print!("{}", result.summary_text());
    println!("results in {}", out.display());
    Ok(())
}
