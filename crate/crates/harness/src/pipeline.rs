//! Generation, training, evaluation and tracing built from an
//! [`ExperimentConfig`]. The command handlers and the acceptance suite share
//! these entry points.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nisac_core::channel::{
    apply_channel, complex_gaussian, draw_channel, frame_received, noise_variance_from_snr,
};
use nisac_core::dataset::{generate_dataset, load_dataset, Dataset, Mode};
use nisac_core::metrics::{evaluate, Evaluation, Receiver};
use nisac_core::modem::{ppm_modulate, BitFrame, ChipSequence};
use nisac_core::seed::{derive_rng, derive_seed, stream};
use nisac_core::snn::{forward, load_model, save_model, spike_count, SnnModel};
use nisac_core::training::{train, EpochLog, Role};
use rand::Rng;

use crate::config::{ExperimentConfig, Scheme};
use crate::error::{HarnessError, Result};

/// Master seed of the test split; the training split uses `seed` itself.
pub fn test_split_seed(seed: u64) -> u64 {
    derive_seed(seed, stream::TEST_SPLIT, 0)
}

pub fn generate_splits(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let channel = cfg.channel();
    let spec = cfg.dataset_spec();
    let train = generate_dataset(&channel, &spec, cfg.n_train, cfg.seed)?;
    let test = generate_dataset(&channel, &spec, cfg.n_test, test_split_seed(cfg.seed))?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedReceiver {
    Isac(SnnModel),
    Ssac { comm: SnnModel, sense: SnnModel },
}

impl TrainedReceiver {
    pub fn receiver(&self) -> Receiver<'_> {
        match self {
            TrainedReceiver::Isac(m) => Receiver::Isac(m),
            TrainedReceiver::Ssac { comm, sense } => Receiver::Ssac { comm, sense },
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            TrainedReceiver::Isac(_) => Scheme::Isac,
            TrainedReceiver::Ssac { .. } => Scheme::Ssac,
        }
    }

    pub fn models(&self) -> Vec<&SnnModel> {
        match self {
            TrainedReceiver::Isac(m) => vec![m],
            TrainedReceiver::Ssac { comm, sense } => vec![comm, sense],
        }
    }
}

/// One epoch of one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub network: &'static str,
    pub log: EpochLog,
}

/// Checks that a dataset was generated with the slot split the scheme needs.
pub fn check_dataset_split(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    let expected = match cfg.mode {
        Scheme::Isac => data.slots,
        Scheme::Ssac => Mode::Ssac { alpha: cfg.alpha }.data_slots(data.slots)?,
    };
    if data.data_slot_count != expected {
        return Err(HarnessError::Usage(format!(
            "dataset has {} data slots out of {}, but {} with alpha {} needs {}",
            data.data_slot_count,
            data.slots,
            cfg.mode.as_str(),
            cfg.alpha,
            expected
        )));
    }
    Ok(())
}

/// Trains the receiver of `cfg.mode` from freshly initialized weights.
///
/// The joint network is initialized from init stream index 0; the separate
/// decoding and sensing networks use indices 1 and 2.
pub fn train_receiver(
    cfg: &ExperimentConfig,
    data: &Dataset,
) -> Result<(TrainedReceiver, Vec<TrainLogRow>)> {
    cfg.validate()?;
    check_dataset_split(cfg, data)?;
    let tc = cfg.training();
    let init = |index: u64| {
        SnnModel::init(
            cfg.hidden,
            data.bandwidth_expansion,
            cfg.neuron(),
            &mut derive_rng(cfg.seed, stream::INIT, index),
        )
    };
    let rows = |network: &'static str, logs: Vec<EpochLog>| {
        logs.into_iter()
            .map(move |log| TrainLogRow { network, log })
    };
    match cfg.mode {
        Scheme::Isac => {
            let (model, logs) = train(&init(0)?, &data.examples, &tc, Role::Isac)?;
            Ok((TrainedReceiver::Isac(model), rows("isac", logs).collect()))
        }
        Scheme::Ssac => {
            let (comm, cl) = train(&init(1)?, &data.examples, &tc, Role::SsacComm)?;
            let (sense, sl) = train(&init(2)?, &data.examples, &tc, Role::SsacSense)?;
            let log = rows("comm", cl).chain(rows("sense", sl)).collect();
            Ok((TrainedReceiver::Ssac { comm, sense }, log))
        }
    }
}

pub fn evaluate_receiver(receiver: &TrainedReceiver, data: &Dataset) -> Result<Evaluation> {
    Ok(evaluate(receiver.receiver(), data)?)
}

/// Companion path of the sensing network: `model.nism` becomes
/// `model.sense.nism`.
pub fn sense_model_path(comm_path: &Path) -> PathBuf {
    let stem = comm_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match comm_path.extension() {
        Some(ext) => format!("{stem}.sense.{}", ext.to_string_lossy()),
        None => format!("{stem}.sense"),
    };
    comm_path.with_file_name(name)
}

pub fn save_receiver(receiver: &TrainedReceiver, path: &Path, sense_path: &Path) -> Result<()> {
    match receiver {
        TrainedReceiver::Isac(m) => save_model(m, path).map_err(HarnessError::file(path)),
        TrainedReceiver::Ssac { comm, sense } => {
            save_model(comm, path).map_err(HarnessError::file(path))?;
            save_model(sense, sense_path).map_err(HarnessError::file(sense_path))
        }
    }
}

pub fn load_receiver(path: &Path, sense_path: Option<&Path>) -> Result<TrainedReceiver> {
    let first = load_model(path).map_err(HarnessError::file(path))?;
    Ok(match sense_path {
        None => TrainedReceiver::Isac(first),
        Some(p) => TrainedReceiver::Ssac {
            comm: first,
            sense: load_model(p).map_err(HarnessError::file(p))?,
        },
    })
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    load_dataset(path).map_err(HarnessError::file(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Active,
    Idle,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Active => "active",
            Segment::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub slot: usize,
    pub segment: Segment,
    /// Hidden and readout spikes of every network.
    pub spike_count: usize,
    pub hidden_spike_count: usize,
}

/// Runs the receiver on two active frames separated by an idle gap in which
/// the transmitter is silent.
///
/// A single channel realization spans the whole pattern and the convolution
/// runs across segment boundaries, so echoes of the first frame leak into the
/// gap. Inputs are rounded to `f32` like stored datasets.
pub fn trace_spikes(
    receiver: &TrainedReceiver,
    cfg: &ExperimentConfig,
    target: Option<bool>,
) -> Result<Vec<TraceRow>> {
    let lb = receiver.models()[0].bandwidth_expansion();
    let channel_cfg = cfg.channel();
    channel_cfg.validate()?;
    let mut rng = derive_rng(cfg.seed, stream::TRACE, 0);
    let v = match target {
        Some(v) => v,
        None => rng.random_bool(channel_cfg.target_prior),
    };
    if cfg.active_slots == 0 {
        return Err(HarnessError::Usage(
            "active segments need at least one slot".into(),
        ));
    }
    let first = random_frame(&mut rng, cfg.active_slots, lb)?;
    let second = random_frame(&mut rng, cfg.active_slots, lb)?;
    let chips = first
        .concat(&ChipSequence::silent(cfg.idle_slots, lb))?
        .concat(&second)?;

    let channel = draw_channel(&channel_cfg, v, &mut rng)?;
    let noise_variance = noise_variance_from_snr(&channel_cfg);
    let mut samples = apply_channel(&chips, &channel, 0.0, &mut rng);
    let idle = cfg.active_slots * 2 * lb..(cfg.active_slots + cfg.idle_slots) * 2 * lb;
    for (i, y) in samples.iter_mut().enumerate() {
        if cfg.idle_noise || !idle.contains(&i) {
            *y += complex_gaussian(&mut rng, noise_variance);
        }
    }
    let mut inputs = frame_received(&samples, lb, noise_variance)?;
    inputs.quantize_f32();

    let mut counts = vec![(0usize, 0usize); inputs.slot_count()];
    for model in receiver.models() {
        let trace = forward(model, &inputs)?;
        for (l, (c, s)) in counts.iter_mut().zip(spike_count(&trace)).enumerate() {
            c.0 += s;
            c.1 += trace
                .hidden
                .spikes
                .row(l)
                .iter()
                .filter(|&&b| b > 0.5)
                .count();
        }
    }
    let idle = cfg.active_slots..cfg.active_slots + cfg.idle_slots;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(slot, (spike_count, hidden_spike_count))| TraceRow {
            slot,
            segment: if idle.contains(&slot) {
                Segment::Idle
            } else {
                Segment::Active
            },
            spike_count,
            hidden_spike_count,
        })
        .collect())
}

fn random_frame<R: Rng>(rng: &mut R, slots: usize, lb: usize) -> Result<ChipSequence> {
    let bits: Vec<bool> = (0..slots).map(|_| rng.random_bool(0.5)).collect();
    Ok(ppm_modulate(&BitFrame::new(bits), lb)?)
}

/// Mean spikes per slot of the active and idle segments, counted by `count`.
pub fn segment_means(rows: &[TraceRow], count: impl Fn(&TraceRow) -> usize) -> (f64, f64) {
    let mean = |seg: Segment| {
        let counts: Vec<usize> = rows
            .iter()
            .filter(|r| r.segment == seg)
            .map(&count)
            .collect();
        if counts.is_empty() {
            f64::NAN
        } else {
            counts.iter().sum::<usize>() as f64 / counts.len() as f64
        }
    };
    (mean(Segment::Active), mean(Segment::Idle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Beta,
    Alpha,
    Lb,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Alpha => "alpha",
            SweepParam::Lb => "lb",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: ExperimentConfig,
    pub evaluation: Evaluation,
}

/// The configurations of a sweep, in output order: grid values outermost,
/// schemes inner.
pub fn sweep_points(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    schemes: &[Scheme],
) -> Result<Vec<ExperimentConfig>> {
    if values.is_empty() || schemes.is_empty() {
        return Err(HarnessError::Usage("sweep grid is empty".into()));
    }
    let mut points = Vec::with_capacity(values.len() * schemes.len());
    for &value in values {
        for &mode in schemes {
            let mut cfg = base.clone();
            cfg.mode = mode;
            match param {
                SweepParam::Beta => cfg.beta = value,
                SweepParam::Alpha => cfg.alpha = value,
                SweepParam::Lb => {
                    if value.fract() != 0.0 || value < 1.0 {
                        return Err(HarnessError::Usage(format!(
                            "L_b values must be positive integers, got {value}"
                        )));
                    }
                    cfg.lb = value as usize;
                }
            }
            cfg.validate()?;
            points.push(cfg);
        }
    }
    Ok(points)
}

/// Generates data, trains and evaluates every grid point. Datasets are shared
/// between points with the same shape.
pub fn run_sweep(points: &[ExperimentConfig]) -> Result<Vec<SweepRow>> {
    let mut cache: HashMap<(usize, usize), (Dataset, Dataset)> = HashMap::new();
    let mut rows = Vec::with_capacity(points.len());
    for cfg in points {
        let key = (cfg.lb, cfg.data_slots()?);
        let (train_set, test_set) = match cache.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(generate_splits(cfg)?),
        };
        let (receiver, _) = train_receiver(cfg, &*train_set)?;
        rows.push(SweepRow {
            config: cfg.clone(),
            evaluation: evaluate_receiver(&receiver, &*test_set)?,
        });
    }
    Ok(rows)
}
