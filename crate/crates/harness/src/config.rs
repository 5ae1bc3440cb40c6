//! Experiment configuration.
//!
//! Every key can be set in a flat TOML file passed with `--config`; command
//! line flags override the file, and the file overrides the defaults below.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | 0 | master seed for data, initialization and shuffling |
//! | `slots` | 80 | slots per frame `L` |
//! | `lb` | 1 | bandwidth expansion factor `L_b` |
//! | `snr_db` | 10 | average SNR in dB |
//! | `n_train`, `n_test` | 4000, 1000 | examples per split |
//! | `mode` | `"isac"` | `"isac"` or `"ssac"` |
//! | `alpha` | 0.5 | data-slot fraction of the separate scheme |
//! | `beta` | 0.5 | communication weight of the joint loss |
//! | `hidden` | 10 | hidden neurons per network |
//! | `epochs`, `lr`, `batch` | 50, 0.02, 32 | SGD budget |
//! | `slope` | 3 | sigmoid surrogate slope |
//! | `tau_mem`, `tau_syn`, `tau_ref` | 1, 0.5, 0.5 | time constants in slots |
//! | `num_clutter` | 5 | clutter paths |
//! | `weibull_shape` | 2 | clutter magnitude shape, scale renormalized to unit power |
//! | `active_slots`, `idle_slots` | 80, 20 | trace pattern |
//! | `idle_noise` | true | idle slots carry receiver noise, otherwise only channel echoes |

use std::path::Path;

use clap::ValueEnum;
use nisac_core::channel::ChannelConfig;
use nisac_core::dataset::{DatasetSpec, Mode};
use nisac_core::modem::data_slots_for;
use nisac_core::snn::NeuronParams;
use nisac_core::training::{TrainConfig, DEFAULT_LEARNING_RATE, DEFAULT_SURROGATE_SLOPE};
use serde::Deserialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Isac,
    Ssac,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Isac => "isac",
            Scheme::Ssac => "ssac",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub slots: usize,
    pub lb: usize,
    pub snr_db: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub mode: Scheme,
    pub alpha: f64,
    pub beta: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub slope: f64,
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
    pub num_clutter: usize,
    pub weibull_shape: f64,
    pub active_slots: usize,
    pub idle_slots: usize,
    pub idle_noise: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let neuron = NeuronParams::default();
        Self {
            seed: 0,
            slots: 80,
            lb: 1,
            snr_db: 10.0,
            n_train: 4000,
            n_test: 1000,
            mode: Scheme::Isac,
            alpha: 0.5,
            beta: 0.5,
            hidden: 10,
            epochs: 50,
            lr: DEFAULT_LEARNING_RATE,
            batch: 32,
            slope: DEFAULT_SURROGATE_SLOPE,
            tau_mem: neuron.tau_mem,
            tau_syn: neuron.tau_syn,
            tau_ref: neuron.tau_ref,
            num_clutter: 5,
            weibull_shape: 2.0,
            active_slots: 80,
            idle_slots: 20,
            idle_noise: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml_str(&text).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    /// Checks every field before any file is touched.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(HarnessError::Usage(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return usage(format!("--beta must lie in [0, 1], got {}", self.beta));
        }
        if self.mode == Scheme::Ssac && !(0.0..1.0).contains(&self.alpha) {
            return usage(format!(
                "--alpha must lie in [0, 1) for ssac, got {}",
                self.alpha
            ));
        }
        if self.slots == 0 || self.lb == 0 || self.hidden == 0 {
            return usage("--L, --Lb and --hidden must be positive".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return usage("--n-train and --n-test must be positive".into());
        }
        if !self.snr_db.is_finite() {
            return usage(format!("--snr-db must be finite, got {}", self.snr_db));
        }
        self.channel().validate()?;
        self.neuron().validate()?;
        self.training().validate()?;
        self.data_slots()?;
        Ok(())
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            num_clutter: self.num_clutter,
            ..ChannelConfig::default()
        }
        .with_weibull_shape(self.weibull_shape)
        .with_snr_db(self.snr_db)
    }

    pub fn dataset_mode(&self) -> Mode {
        match self.mode {
            Scheme::Isac => Mode::Isac,
            Scheme::Ssac => Mode::Ssac { alpha: self.alpha },
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            slots: self.slots,
            bandwidth_expansion: self.lb,
            mode: self.dataset_mode(),
        }
    }

    pub fn data_slots(&self) -> Result<usize> {
        Ok(match self.mode {
            Scheme::Isac => self.slots,
            Scheme::Ssac => data_slots_for(self.alpha, self.slots)?,
        })
    }

    pub fn neuron(&self) -> NeuronParams {
        NeuronParams {
            tau_mem: self.tau_mem,
            tau_syn: self.tau_syn,
            tau_ref: self.tau_ref,
            ..NeuronParams::default()
        }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            surrogate_slope: self.slope,
            seed: self.seed,
        }
    }

    /// Column names of [`ExperimentConfig::echo`].
    pub const ECHO_COLUMNS: [&'static str; 17] = [
        "seed", "mode", "slots", "lb", "snr_db", "n_train", "n_test", "alpha", "beta", "hidden",
        "epochs", "lr", "batch", "slope", "tau_mem", "tau_syn", "tau_ref",
    ];

    pub fn echo(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.mode.as_str().to_string(),
            self.slots.to_string(),
            self.lb.to_string(),
            self.snr_db.to_string(),
            self.n_train.to_string(),
            self.n_test.to_string(),
            self.alpha.to_string(),
            self.beta.to_string(),
            self.hidden.to_string(),
            self.epochs.to_string(),
            self.lr.to_string(),
            self.batch.to_string(),
            self.slope.to_string(),
            self.tau_mem.to_string(),
            self.tau_syn.to_string(),
            self.tau_ref.to_string(),
        ]
    }
}
