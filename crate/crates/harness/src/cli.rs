//! Command line front end: `gen`, `train`, `eval`, `sweep` and `trace`.
//!
//! Every CSV starts with a header row and echoes the seed. Exit status is 0
//! on success, 2 for rejected flags or inconsistent inputs and 3 when a file
//! cannot be read or written.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Scheme};
use crate::error::{HarnessError, Result};
use crate::pipeline::{
    check_dataset_split, evaluate_receiver, generate_splits, load_receiver, read_dataset_file,
    run_sweep, save_receiver, sense_model_path, sweep_points, trace_spikes, SweepParam,
};
use nisac_core::dataset::{save_dataset, Dataset};
use nisac_core::metrics::Evaluation;

#[derive(Debug, Parser)]
#[command(
    name = "nisac",
    version,
    about = "Neuromorphic ISAC receiver experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and test datasets.
    Gen(GenArgs),
    /// Train a receiver on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained receiver on a dataset.
    Eval(EvalArgs),
    /// Generate, train and evaluate over a parameter grid.
    Sweep(SweepArgs),
    /// Per-slot spike counts over an active, idle, active pattern.
    Trace(TraceArgs),
}

/// Experiment settings shared by every command. Unset flags fall back to the
/// config file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Flat TOML file with experiment keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Slots per frame.
    #[arg(long = "L", visible_alias = "slots")]
    pub slots: Option<usize>,
    /// Bandwidth expansion factor.
    #[arg(long = "Lb", visible_alias = "lb")]
    pub lb: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Scheme>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Sigmoid surrogate slope.
    #[arg(long, allow_negative_numbers = true)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub tau_mem: Option<f64>,
    #[arg(long)]
    pub tau_syn: Option<f64>,
    #[arg(long)]
    pub tau_ref: Option<f64>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            seed, slots, lb, snr_db, n_train, n_test, mode, alpha, beta, hidden, epochs, lr, batch,
            slope, tau_mem, tau_syn, tau_ref
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub out_train: Option<PathBuf>,
    #[arg(long)]
    pub out_test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Training dataset.
    #[arg(long)]
    pub train: PathBuf,
    /// Model file; for ssac this is the decoding network.
    #[arg(long)]
    pub model_out: PathBuf,
    /// Sensing network of ssac (default: `<model-out stem>.sense.<ext>`).
    #[arg(long)]
    pub sense_model_out: Option<PathBuf>,
    /// Per-epoch CSV (default: stdout).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Joint model, or the decoding network when `--sense-model` is given.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sense_model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid.
    #[arg(long, value_delimiter = ',', num_args = 0.., allow_negative_numbers = true)]
    pub values: Vec<f64>,
    /// Schemes evaluated at each grid point (default: `--mode`).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub modes: Vec<Scheme>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sense_model: Option<PathBuf>,
    #[arg(long)]
    pub active_slots: Option<usize>,
    #[arg(long)]
    pub idle_slots: Option<usize>,
    /// Noise-free idle gap instead of receiver noise.
    #[arg(long)]
    pub quiet_idle: bool,
    /// Force target presence (`true`/`false`); drawn from the seed otherwise.
    #[arg(long)]
    pub target: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Trace(a) => trace(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let (Some(out_train), Some(out_test)) = (a.out_train, a.out_test) else {
        return Err(HarnessError::Usage(
            "gen needs both --out-train and --out-test".into(),
        ));
    };
    let (train, test) = generate_splits(&cfg)?;
    for (name, data, path) in [("train", &train, &out_train), ("test", &test, &out_test)] {
        save_dataset(data, path).map_err(HarnessError::file(path))?;
        println!("{}", summary(name, data, path));
    }
    Ok(())
}

fn summary(name: &str, d: &Dataset, path: &Path) -> String {
    format!(
        "{name}: {} examples, L={} L_b={} data_slots={} snr_db={} seed={} -> {}",
        d.len(),
        d.slots,
        d.bandwidth_expansion,
        d.data_slot_count,
        d.snr_db,
        d.master_seed,
        path.display()
    )
}

/// Dataset header fields take precedence over settings for the echo.
fn with_dataset_shape(mut cfg: ExperimentConfig, d: &Dataset) -> ExperimentConfig {
    cfg.slots = d.slots;
    cfg.lb = d.bandwidth_expansion;
    cfg.snr_db = d.snr_db;
    cfg
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let data = read_dataset_file(&a.train)?;
    let cfg = ExperimentConfig {
        n_train: data.len(),
        ..with_dataset_shape(cfg, &data)
    };
    check_dataset_split(&cfg, &data)?;
    let (receiver, log) = crate::pipeline::train_receiver(&cfg, &data)?;
    let sense_path = a
        .sense_model_out
        .clone()
        .unwrap_or_else(|| sense_model_path(&a.model_out));
    save_receiver(&receiver, &a.model_out, &sense_path)?;

    let mut w = csv_writer(a.log.as_deref())?;
    w.write_record([
        "seed",
        "mode",
        "network",
        "epoch",
        "comm_loss",
        "sense_loss",
        "total_loss",
        "train_throughput",
        "train_det_error",
    ])?;
    for row in &log {
        let l = &row.log;
        w.write_record([
            cfg.seed.to_string(),
            cfg.mode.as_str().to_string(),
            row.network.to_string(),
            l.epoch.to_string(),
            l.losses.comm.to_string(),
            l.losses.sense.to_string(),
            l.losses.total.to_string(),
            l.train_throughput.to_string(),
            l.train_det_error.to_string(),
        ])?;
    }
    w.flush()
        .map_err(HarnessError::io(log_name(a.log.as_deref())))?;
    Ok(())
}

const METRIC_COLUMNS: [&str; 3] = ["throughput", "detection_error", "mean_spike_count"];

fn metric_values(e: &Evaluation) -> [String; 3] {
    [
        e.throughput.to_string(),
        e.detection_error.to_string(),
        e.mean_spike_count.to_string(),
    ]
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let data = read_dataset_file(&a.data)?;
    let receiver = load_receiver(&a.model, a.sense_model.as_deref())?;
    let evaluation = evaluate_receiver(&receiver, &data)?;
    let model = receiver.models()[0];
    let cfg = ExperimentConfig {
        seed: data.master_seed,
        mode: receiver.scheme(),
        n_test: data.len(),
        hidden: model.hidden_count(),
        ..with_dataset_shape(cfg, &data)
    };

    let mut w = csv_writer(a.out.as_deref())?;
    let header = [
        "seed",
        "mode",
        "slots",
        "lb",
        "snr_db",
        "data_slots",
        "n_test",
        "hidden",
    ];
    w.write_record(header.iter().chain(&METRIC_COLUMNS))?;
    let mut row = vec![
        cfg.seed.to_string(),
        cfg.mode.as_str().to_string(),
        cfg.slots.to_string(),
        cfg.lb.to_string(),
        cfg.snr_db.to_string(),
        data.data_slot_count.to_string(),
        cfg.n_test.to_string(),
        cfg.hidden.to_string(),
    ];
    row.extend(metric_values(&evaluation));
    w.write_record(&row)?;
    w.flush()
        .map_err(HarnessError::io(log_name(a.out.as_deref())))?;
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let modes = if a.modes.is_empty() {
        vec![cfg.mode]
    } else {
        a.modes.clone()
    };
    let points = sweep_points(&cfg, a.param, &a.values, &modes)?;
    // Open the output before the long part so that a bad path fails fast.
    let mut w = csv_writer(a.out.as_deref())?;
    let rows = run_sweep(&points)?;
    w.write_record(
        std::iter::once("param")
            .chain(ExperimentConfig::ECHO_COLUMNS)
            .chain(METRIC_COLUMNS),
    )?;
    for row in &rows {
        let mut record = vec![a.param.as_str().to_string()];
        record.extend(row.config.echo());
        record.extend(metric_values(&row.evaluation));
        w.write_record(&record)?;
    }
    w.flush()
        .map_err(HarnessError::io(log_name(a.out.as_deref())))?;
    Ok(())
}

fn trace(a: TraceArgs) -> Result<()> {
    let mut cfg = a.common.resolve()?;
    if let Some(n) = a.active_slots {
        cfg.active_slots = n;
    }
    if let Some(n) = a.idle_slots {
        cfg.idle_slots = n;
    }
    if a.quiet_idle {
        cfg.idle_noise = false;
    }
    let receiver = load_receiver(&a.model, a.sense_model.as_deref())?;
    let rows = trace_spikes(&receiver, &cfg, a.target)?;
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record([
        "seed",
        "slot",
        "segment",
        "spike_count",
        "hidden_spike_count",
    ])?;
    for r in &rows {
        w.write_record([
            cfg.seed.to_string(),
            r.slot.to_string(),
            r.segment.as_str().to_string(),
            r.spike_count.to_string(),
            r.hidden_spike_count.to_string(),
        ])?;
    }
    w.flush()
        .map_err(HarnessError::io(log_name(a.out.as_deref())))?;
    Ok(())
}

fn log_name(path: Option<&Path>) -> PathBuf {
    path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf)
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).map_err(HarnessError::io(p))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}
