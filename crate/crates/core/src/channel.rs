//! Radar/clutter multipath channel on the chip grid.
//!
//! The tap vector is the superposition of a possible target at delay `τ0`
//! with complex Gaussian amplitude and `N_c` clutter paths with uniform phase,
//! Weibull magnitude and a delay drawn uniformly over the integer chips
//! `0..=max_clutter_delay`. One realization is held for a whole frame.

use std::f64::consts::PI;

pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Weibull};
use statrs::function::gamma::gamma;

use crate::modem::ChipSequence;
use crate::{Error, Result};

pub const MIN_WEIBULL_SHAPE: f64 = 0.25;
pub const MAX_WEIBULL_SHAPE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub num_clutter: usize,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub target_power: f64,
    pub target_delay: usize,
    pub max_clutter_delay: usize,
    pub tap_count: usize,
    pub snr_db: f64,
    pub target_prior: f64,
}

impl Default for ChannelConfig {
    /// Five Rayleigh clutter paths over 0..=4 chips, unit-power target at
    /// delay 0, 10 dB SNR.
    fn default() -> Self {
        Self {
            num_clutter: 5,
            weibull_shape: 2.0,
            weibull_scale: unit_power_weibull_scale(2.0),
            target_power: 1.0,
            target_delay: 0,
            max_clutter_delay: 4,
            tap_count: 5,
            snr_db: 10.0,
            target_prior: 0.5,
        }
    }
}

impl ChannelConfig {
    /// Changes the Weibull shape and renormalizes the scale so that clutter
    /// amplitudes keep unit second moment.
    pub fn with_weibull_shape(mut self, shape: f64) -> Self {
        self.weibull_shape = shape;
        self.weibull_scale = unit_power_weibull_scale(shape);
        self
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_WEIBULL_SHAPE..=MAX_WEIBULL_SHAPE).contains(&self.weibull_shape) {
            return Err(Error::InvalidChannel(format!(
                "Weibull shape {} outside [0.25, 2]",
                self.weibull_shape
            )));
        }
        if !(self.weibull_scale > 0.0 && self.weibull_scale.is_finite()) {
            return Err(Error::InvalidChannel(format!(
                "Weibull scale must be positive, got {}",
                self.weibull_scale
            )));
        }
        if !(self.target_power > 0.0 && self.target_power.is_finite()) {
            return Err(Error::InvalidChannel(format!(
                "target power must be positive, got {}",
                self.target_power
            )));
        }
        if !(0.0..=1.0).contains(&self.target_prior) {
            return Err(Error::InvalidChannel(format!(
                "target prior {} outside [0, 1]",
                self.target_prior
            )));
        }
        let needed = self.target_delay.max(self.max_clutter_delay) + 1;
        if self.tap_count < needed {
            return Err(Error::InvalidChannel(format!(
                "tap count {} too small, delays need {needed}",
                self.tap_count
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidChannel("SNR must be finite".into()));
        }
        Ok(())
    }

    /// Second moment `λ² Γ(1 + 2/κ)` of one clutter amplitude.
    pub fn clutter_second_moment(&self) -> f64 {
        self.weibull_scale.powi(2) * gamma(1.0 + 2.0 / self.weibull_shape)
    }
}

/// Scale `λ` giving `E|β|² = 1` for Weibull shape `κ`.
pub fn unit_power_weibull_scale(shape: f64) -> f64 {
    1.0 / gamma(1.0 + 2.0 / shape).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    pub target_present: bool,
    pub target_amp: Complex64,
    pub clutter_amps: Vec<Complex64>,
    pub clutter_delays: Vec<usize>,
}

impl ChannelRealization {
    /// Deterministic channel from explicit taps, no latent draw metadata.
    pub fn from_taps(taps: Vec<Complex64>) -> Self {
        Self {
            taps,
            target_present: false,
            target_amp: Complex64::new(0.0, 0.0),
            clutter_amps: Vec::new(),
            clutter_delays: Vec::new(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// `CN(0, variance)`: real and imaginary parts each carry half the variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Complex64::new(sd * normal.sample(rng), sd * normal.sample(rng))
}

pub fn draw_channel<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    target_present: bool,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let weibull = Weibull::new(cfg.weibull_scale, cfg.weibull_shape)
        .map_err(|e| Error::InvalidChannel(e.to_string()))?;

    // β0 is drawn even without a target so that both hypotheses consume the
    // random stream identically.
    let target_amp = complex_gaussian(rng, cfg.target_power);
    let mut clutter_amps = Vec::with_capacity(cfg.num_clutter);
    let mut clutter_delays = Vec::with_capacity(cfg.num_clutter);
    for _ in 0..cfg.num_clutter {
        let magnitude: f64 = weibull.sample(rng);
        let phase = rng.random_range(0.0..2.0 * PI);
        clutter_amps.push(Complex64::from_polar(magnitude, phase));
        clutter_delays.push(rng.random_range(0..=cfg.max_clutter_delay));
    }

    let mut taps = vec![Complex64::new(0.0, 0.0); cfg.tap_count];
    if target_present {
        taps[cfg.target_delay] += target_amp;
    }
    for (amp, &delay) in clutter_amps.iter().zip(&clutter_delays) {
        taps[delay] += amp;
    }

    Ok(ChannelRealization {
        taps,
        target_present,
        target_amp,
        clutter_amps,
        clutter_delays,
    })
}

/// `E‖h‖² = N_c E|β_c|² + prior σ0²`, the average used for SNR calibration.
pub fn expected_channel_energy(cfg: &ChannelConfig) -> f64 {
    cfg.num_clutter as f64 * cfg.clutter_second_moment() + cfg.target_prior * cfg.target_power
}

/// Per-sample noise variance `N0 B = E‖h‖² E_b / 10^(SNR/10)` with `E_b = 1`.
pub fn noise_variance_from_snr(cfg: &ChannelConfig) -> f64 {
    noise_variance_for_energy(expected_channel_energy(cfg), cfg.snr_db)
}

pub fn noise_variance_for_energy(channel_energy: f64, snr_db: f64) -> f64 {
    channel_energy / 10f64.powf(snr_db / 10.0)
}

/// Convolves the chips with the taps, truncated to the chip count, and adds
/// circularly-symmetric Gaussian noise of the given per-sample variance.
pub fn apply_channel<R: Rng + ?Sized>(
    chips: &ChipSequence,
    channel: &ChannelRealization,
    noise_variance: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let mut samples = convolve(chips.chips(), &channel.taps);
    if noise_variance > 0.0 {
        for y in &mut samples {
            *y += complex_gaussian(rng, noise_variance);
        }
    }
    samples
}

fn convolve(chips: &[f64], taps: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); chips.len()];
    for (i, &s) in chips.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (m, h) in taps.iter().enumerate() {
            if let Some(y) = out.get_mut(i + m) {
                *y += h * s;
            }
        }
    }
    out
}

/// Per-slot real SNN inputs: `[Re(y_l); Im(y_l)]`, `4 L_b` values per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub slot_inputs: Vec<Vec<f64>>,
    pub noise_variance: f64,
}

impl ReceivedFrame {
    pub fn slot_count(&self) -> usize {
        self.slot_inputs.len()
    }

    pub fn input_width(&self) -> usize {
        self.slot_inputs.first().map_or(0, Vec::len)
    }

    /// Rounds every input through `f32`, the precision of stored datasets.
    pub fn quantize_f32(&mut self) {
        for v in self.slot_inputs.iter_mut().flatten() {
            *v = *v as f32 as f64;
        }
    }
}

pub fn frame_received(
    samples: &[Complex64],
    bandwidth_expansion: usize,
    noise_variance: f64,
) -> Result<ReceivedFrame> {
    if bandwidth_expansion < 1 {
        return Err(Error::InvalidBandwidthExpansion(bandwidth_expansion));
    }
    let per_slot = 2 * bandwidth_expansion;
    if !samples.len().is_multiple_of(per_slot) {
        return Err(Error::LengthMismatch {
            expected: samples.len().next_multiple_of(per_slot),
            actual: samples.len(),
        });
    }
    let slot_inputs = samples
        .chunks(per_slot)
        .map(|slot| {
            slot.iter()
                .map(|y| y.re)
                .chain(slot.iter().map(|y| y.im))
                .collect()
        })
        .collect();
    Ok(ReceivedFrame {
        slot_inputs,
        noise_variance,
    })
}
