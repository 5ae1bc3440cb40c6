//! Normalized throughput, majority-rule target detection and receiver
//! evaluation over a dataset.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::modem::BitFrame;
use crate::snn::{forward, spike_count, SnnModel};
use crate::{Error, Result};

/// Mean fraction of correctly decoded data bits, normalized by the total slot
/// count `L` (so a separated frame is capped by its data fraction).
pub fn normalized_throughput(decisions: &[Vec<bool>], truths: &[BitFrame]) -> Result<f64> {
    if decisions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: decisions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (x_hat, x) in decisions.iter().zip(truths) {
        total += frame_throughput(x_hat, x)?;
    }
    Ok(total / truths.len() as f64)
}

fn frame_throughput(decisions: &[bool], truth: &BitFrame) -> Result<f64> {
    if decisions.len() < truth.data_slot_count() {
        return Err(Error::LengthMismatch {
            expected: truth.data_slot_count(),
            actual: decisions.len(),
        });
    }
    let correct = decisions
        .iter()
        .zip(truth.data_bits())
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

/// `1` iff strictly more than half of the per-slot votes are `1`; an exact tie
/// resolves to "no target".
pub fn majority_detection(votes: &[bool]) -> Result<bool> {
    if votes.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let ones = votes.iter().filter(|&&v| v).count();
    Ok(2 * ones > votes.len())
}

/// Fraction of examples whose majority decision differs from the truth.
pub fn detection_error_rate(votes: &[Vec<bool>], truths: &[bool]) -> Result<f64> {
    if votes.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: votes.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut wrong = 0usize;
    for (v, &t) in votes.iter().zip(truths) {
        wrong += usize::from(majority_detection(v)? != t);
    }
    Ok(wrong as f64 / truths.len() as f64)
}

/// A trained receiver: one shared network, or separate decoding and sensing
/// networks that split the frame at the data-slot boundary.
#[derive(Debug, Clone, Copy)]
pub enum Receiver<'a> {
    Isac(&'a SnnModel),
    Ssac {
        comm: &'a SnnModel,
        sense: &'a SnnModel,
    },
}

impl Receiver<'_> {
    fn models(&self) -> Vec<&SnnModel> {
        match *self {
            Receiver::Isac(m) => vec![m],
            Receiver::Ssac { comm, sense } => vec![comm, sense],
        }
    }
}

/// Decisions of a receiver on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDecisions {
    /// `x̂_l` for every slot (only data slots are scored).
    pub bits: Vec<bool>,
    /// `v̂_l` over the slots that vote on the target.
    pub votes: Vec<bool>,
    /// Spikes per slot summed over every network of the receiver.
    pub spike_counts: Vec<usize>,
}

pub fn decide(
    receiver: Receiver<'_>,
    inputs: &crate::channel::ReceivedFrame,
    data_slot_count: usize,
) -> Result<FrameDecisions> {
    match receiver {
        Receiver::Isac(model) => {
            let t = forward(model, inputs)?;
            Ok(FrameDecisions {
                bits: t.comm_decisions(),
                votes: t.sense_decisions(),
                spike_counts: spike_count(&t),
            })
        }
        Receiver::Ssac { comm, sense } => {
            let tc = forward(comm, inputs)?;
            let ts = forward(sense, inputs)?;
            let spike_counts = spike_count(&tc)
                .iter()
                .zip(spike_count(&ts))
                .map(|(a, b)| a + b)
                .collect();
            Ok(FrameDecisions {
                bits: tc.comm_decisions(),
                votes: ts.sense_decisions()[data_slot_count..].to_vec(),
                spike_counts,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub throughput: f64,
    pub detection_error: f64,
    /// Mean spikes per slot across the whole dataset.
    pub mean_spike_count: f64,
}

/// Runs the receiver over every example of the dataset.
pub fn evaluate(receiver: Receiver<'_>, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for m in receiver.models() {
        if m.input_width() != dataset.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "model input width {} (L_b = {}) vs dataset L_b = {}",
                m.input_width(),
                m.bandwidth_expansion(),
                dataset.bandwidth_expansion
            )));
        }
    }
    if matches!(receiver, Receiver::Ssac { .. }) && dataset.data_slot_count == dataset.slots {
        return Err(Error::InvalidAlpha(1.0));
    }
    let decisions = dataset
        .examples
        .par_iter()
        .map(|ex| decide(receiver, &ex.inputs, dataset.data_slot_count))
        .collect::<Result<Vec<_>>>()?;

    let truths: Vec<BitFrame> = dataset.examples.iter().map(|e| e.bits.clone()).collect();
    let targets: Vec<bool> = dataset.examples.iter().map(|e| e.target).collect();
    let (bits, (votes, spikes)): (Vec<_>, (Vec<_>, Vec<_>)) = decisions
        .into_iter()
        .map(|d| (d.bits, (d.votes, d.spike_counts)))
        .unzip();
    let total_spikes: usize = spikes.iter().flatten().sum();
    let total_slots: usize = spikes.iter().map(Vec::len).sum();
    Ok(Evaluation {
        throughput: normalized_throughput(&bits, &truths)?,
        detection_error: detection_error_rate(&votes, &targets)?,
        mean_spike_count: total_spikes as f64 / total_slots as f64,
    })
}
