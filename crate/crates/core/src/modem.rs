//! Pulse-position modulation at chip rate.
//!
//! A slot spans `2 * L_b` chips. Bit `0` puts a unit chip at the first chip of
//! the slot, bit `1` puts it at chip `L_b` (0-based), i.e. in the middle of the
//! slot. The pulse shape itself is never materialized: the receiver works on
//! the sampled model, so the transmitter emits the unit chips directly with
//! unit energy per bit.

use crate::{Error, Result};

/// Information bits of one transmission frame.
///
/// For frames built by [`make_ssac_frame`] only the first `data_slot_count`
/// slots carry data; the remaining sensing slots are fixed to `1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFrame {
    bits: Vec<bool>,
    data_slot_count: usize,
}

impl BitFrame {
    /// Frame in which every slot carries data.
    pub fn new(bits: Vec<bool>) -> Self {
        let data_slot_count = bits.len();
        Self {
            bits,
            data_slot_count,
        }
    }

    /// Frame with an explicit data-slot prefix. Sensing slots must be `1`.
    pub fn with_data_slots(bits: Vec<bool>, data_slot_count: usize) -> Result<Self> {
        if data_slot_count > bits.len() {
            return Err(Error::LengthMismatch {
                expected: bits.len(),
                actual: data_slot_count,
            });
        }
        if bits[data_slot_count..].iter().any(|&b| !b) {
            return Err(Error::Corrupt(
                "sensing slots of a frame must carry the fixed bit 1".into(),
            ));
        }
        Ok(Self {
            bits,
            data_slot_count,
        })
    }

    pub fn from_u8(bits: &[u8]) -> Self {
        Self::new(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn data_bits(&self) -> &[bool] {
        &self.bits[..self.data_slot_count]
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn data_slot_count(&self) -> usize {
        self.data_slot_count
    }

    pub fn sensing_slot_count(&self) -> usize {
        self.bits.len() - self.data_slot_count
    }
}

/// Real chip-rate transmit sequence, `2 * L_b` chips per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSequence {
    chips: Vec<f64>,
    bandwidth_expansion: usize,
}

impl ChipSequence {
    /// Arbitrary chip values; the length must be a whole number of slots.
    pub fn from_chips(chips: Vec<f64>, bandwidth_expansion: usize) -> Result<Self> {
        if bandwidth_expansion < 1 {
            return Err(Error::InvalidBandwidthExpansion(bandwidth_expansion));
        }
        let per_slot = 2 * bandwidth_expansion;
        if !chips.len().is_multiple_of(per_slot) {
            return Err(Error::LengthMismatch {
                expected: chips.len().next_multiple_of(per_slot),
                actual: chips.len(),
            });
        }
        Ok(Self {
            chips,
            bandwidth_expansion,
        })
    }

    /// All-zero sequence of `slots` slots (a silent transmitter).
    pub fn silent(slots: usize, bandwidth_expansion: usize) -> Self {
        Self {
            chips: vec![0.0; 2 * bandwidth_expansion * slots],
            bandwidth_expansion,
        }
    }

    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    pub fn bandwidth_expansion(&self) -> usize {
        self.bandwidth_expansion
    }

    pub fn chips_per_slot(&self) -> usize {
        2 * self.bandwidth_expansion
    }

    pub fn slot_count(&self) -> usize {
        self.chips.len() / self.chips_per_slot()
    }

    pub fn slot(&self, index: usize) -> &[f64] {
        let n = self.chips_per_slot();
        &self.chips[index * n..(index + 1) * n]
    }

    /// Multiplies every chip by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            chips: self.chips.iter().map(|c| c * factor).collect(),
            bandwidth_expansion: self.bandwidth_expansion,
        }
    }

    /// Appends another sequence with the same bandwidth expansion.
    pub fn concat(mut self, other: &ChipSequence) -> Result<Self> {
        if other.bandwidth_expansion != self.bandwidth_expansion {
            return Err(Error::LengthMismatch {
                expected: self.bandwidth_expansion,
                actual: other.bandwidth_expansion,
            });
        }
        self.chips.extend_from_slice(&other.chips);
        Ok(self)
    }
}

/// Intra-slot (0-based) position of the unit chip for `bit`.
pub fn pulse_position(bit: bool, bandwidth_expansion: usize) -> usize {
    if bit {
        bandwidth_expansion
    } else {
        0
    }
}

pub fn ppm_modulate(bits: &BitFrame, bandwidth_expansion: usize) -> Result<ChipSequence> {
    if bandwidth_expansion < 1 {
        return Err(Error::InvalidBandwidthExpansion(bandwidth_expansion));
    }
    if bits.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let per_slot = 2 * bandwidth_expansion;
    let mut chips = vec![0.0; per_slot * bits.len()];
    for (slot, &bit) in bits.bits().iter().enumerate() {
        chips[slot * per_slot + pulse_position(bit, bandwidth_expansion)] = 1.0;
    }
    Ok(ChipSequence {
        chips,
        bandwidth_expansion,
    })
}

/// Number of data slots `ceil(alpha * L)` of a separated frame.
pub fn data_slots_for(alpha: f64, slots: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    // Guard against 0.5 * 80 = 40.000000000000004 style rounding.
    let raw = alpha * slots as f64;
    let rounded = raw.round();
    let count = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    Ok((count as usize).min(slots))
}

/// Builds a separated sensing/communication frame: `ceil(alpha * L)` data
/// slots followed by sensing slots carrying the fixed bit `1`.
pub fn make_ssac_frame(data_bits: &[bool], alpha: f64, slots: usize) -> Result<BitFrame> {
    let data = data_slots_for(alpha, slots)?;
    if data_bits.len() != data {
        return Err(Error::LengthMismatch {
            expected: data,
            actual: data_bits.len(),
        });
    }
    let mut bits = Vec::with_capacity(slots);
    bits.extend_from_slice(data_bits);
    bits.resize(slots, true);
    Ok(BitFrame {
        bits,
        data_slot_count: data,
    })
}

/// Noise-free demodulation: picks the PPM position with the larger magnitude.
pub fn demodulate_argmax(chips: &ChipSequence) -> Vec<bool> {
    let lb = chips.bandwidth_expansion();
    (0..chips.slot_count())
        .map(|l| {
            let slot = chips.slot(l);
            slot[lb].abs() > slot[0].abs()
        })
        .collect()
}
