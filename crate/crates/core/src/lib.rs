//! Core simulation library for neuromorphic integrated sensing and
//! communications (N-ISAC).
//!
//! An impulse-radio transmitter sends pulse-position modulated bits through a
//! multipath channel that may contain a radar target at a known delay cell.
//! A small spiking neural network at the receiver decodes every slot's bit and
//! votes, slot by slot, on whether the target is present.
//!
//! The building blocks are:
//!
//! * [`modem`]: PPM chip sequences and separate sensing/communication frames.
//! * [`channel`]: target + Weibull clutter taps, noisy convolution, per-slot framing.
//! * [`snn`]: discrete-time spike response model network and its persistence.
//! * [`training`]: dual cross-entropy objective, surrogate-gradient BPTT and SGD.
//! * [`dataset`]: seeded example generation and the binary dataset format.
//! * [`metrics`]: normalized throughput, majority-rule detection and evaluation.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod modem;
pub mod seed;
pub mod snn;
pub mod training;

pub use error::{Error, Result};
