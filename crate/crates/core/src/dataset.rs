//! Labeled example generation and the NISD dataset file format.
//!
//! Example `i` of a dataset is generated from its own ChaCha stream seeded by
//! [`derive_seed`](crate::seed::derive_seed)`(master_seed, EXAMPLE, i)` and
//! consumes it in a fixed order: target flag, `L` bits, channel draw, noise.
//!
//! NISD layout (little-endian):
//!
//! | field            | type      |
//! |------------------|-----------|
//! | magic `"NISD"`   | 4 bytes   |
//! | version          | `u32`     |
//! | example count    | `u32`     |
//! | slots `L`        | `u32`     |
//! | `L_b`            | `u32`     |
//! | SNR (dB)         | `f64`     |
//! | master seed      | `u64`     |
//! | data slot count  | `u32`     |
//! | noise variance   | `f64`     |
//!
//! followed, per example, by the target flag (1 byte), `L` bit bytes and
//! `L · 4 L_b` `f32` inputs in slot order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{
    apply_channel, draw_channel, frame_received, noise_variance_from_snr, ChannelConfig,
    ReceivedFrame,
};
use crate::modem::{data_slots_for, ppm_modulate, BitFrame};
use crate::seed::{derive_rng, stream};
use crate::snn::read_array;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: ReceivedFrame,
    pub bits: BitFrame,
    pub target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Isac,
    Ssac { alpha: f64 },
}

impl Mode {
    pub fn data_slots(&self, slots: usize) -> Result<usize> {
        match *self {
            Mode::Isac => Ok(slots),
            Mode::Ssac { alpha } => data_slots_for(alpha, slots),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub slots: usize,
    pub bandwidth_expansion: usize,
    pub snr_db: f64,
    pub master_seed: u64,
    pub data_slot_count: usize,
    pub noise_variance: f64,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn input_width(&self) -> usize {
        4 * self.bandwidth_expansion
    }
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub slots: usize,
    pub bandwidth_expansion: usize,
    pub mode: Mode,
}

impl DatasetSpec {
    fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::EmptyFrame);
        }
        if self.bandwidth_expansion == 0 {
            return Err(Error::InvalidBandwidthExpansion(0));
        }
        self.mode.data_slots(self.slots)?;
        Ok(())
    }
}

/// Generates example `index` alone, exactly as [`generate_dataset`] would.
pub fn generate_example(
    cfg: &ChannelConfig,
    spec: &DatasetSpec,
    master_seed: u64,
    index: u64,
) -> Result<Example> {
    let mut rng = derive_rng(master_seed, stream::EXAMPLE, index);
    let target = rng.random_bool(cfg.target_prior);
    let mut bits: Vec<bool> = (0..spec.slots).map(|_| rng.random_bool(0.5)).collect();
    let data = spec.mode.data_slots(spec.slots)?;
    bits[data..].fill(true);
    let bits = BitFrame::with_data_slots(bits, data)?;

    let channel = draw_channel(cfg, target, &mut rng)?;
    let noise_variance = noise_variance_from_snr(cfg);
    let chips = ppm_modulate(&bits, spec.bandwidth_expansion)?;
    let samples = apply_channel(&chips, &channel, noise_variance, &mut rng);
    let mut inputs = frame_received(&samples, spec.bandwidth_expansion, noise_variance)?;
    inputs.quantize_f32();
    Ok(Example {
        inputs,
        bits,
        target,
    })
}

pub fn generate_dataset(
    cfg: &ChannelConfig,
    spec: &DatasetSpec,
    count: usize,
    master_seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    spec.validate()?;
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let examples = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_example(cfg, spec, master_seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        slots: spec.slots,
        bandwidth_expansion: spec.bandwidth_expansion,
        snr_db: cfg.snr_db,
        master_seed,
        data_slot_count: spec.mode.data_slots(spec.slots)?,
        noise_variance: noise_variance_from_snr(cfg),
        examples,
    })
}

const DATASET_MAGIC: [u8; 4] = *b"NISD";
pub const DATASET_FORMAT_VERSION: u32 = 1;

fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Corrupt(format!("{what} {value} exceeds u32")))
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    let width = dataset.input_width();
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(dataset.len(), "example count")?.to_le_bytes())?;
    w.write_all(&to_u32(dataset.slots, "slot count")?.to_le_bytes())?;
    w.write_all(&to_u32(dataset.bandwidth_expansion, "L_b")?.to_le_bytes())?;
    w.write_all(&dataset.snr_db.to_le_bytes())?;
    w.write_all(&dataset.master_seed.to_le_bytes())?;
    w.write_all(&to_u32(dataset.data_slot_count, "data slot count")?.to_le_bytes())?;
    w.write_all(&dataset.noise_variance.to_le_bytes())?;

    for (i, ex) in dataset.examples.iter().enumerate() {
        if ex.bits.len() != dataset.slots || ex.inputs.slot_count() != dataset.slots {
            return Err(Error::LengthMismatch {
                expected: dataset.slots,
                actual: ex.bits.len(),
            });
        }
        w.write_all(&[u8::from(ex.target)])?;
        let bits: Vec<u8> = ex.bits.bits().iter().map(|&b| u8::from(b)).collect();
        w.write_all(&bits)?;
        for slot in &ex.inputs.slot_inputs {
            if slot.len() != width {
                return Err(Error::DimensionMismatch(format!(
                    "example {i}: slot width {} != {width}",
                    slot.len()
                )));
            }
            for &v in slot {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &'static str) -> Result<u32> {
    read_array(r, what).map(u32::from_le_bytes)
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let magic: [u8; 4] = read_array(&mut r, "dataset magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r, "dataset version")?;
    if version != DATASET_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: DATASET_FORMAT_VERSION,
            found: version,
        });
    }
    let count = read_u32(&mut r, "header")? as usize;
    let slots = read_u32(&mut r, "header")? as usize;
    let lb = read_u32(&mut r, "header")? as usize;
    let snr_db = f64::from_le_bytes(read_array(&mut r, "header")?);
    let master_seed = u64::from_le_bytes(read_array(&mut r, "header")?);
    let data_slot_count = read_u32(&mut r, "header")? as usize;
    let noise_variance = f64::from_le_bytes(read_array(&mut r, "header")?);
    if count == 0 || slots == 0 || lb == 0 {
        return Err(Error::Corrupt(format!(
            "header counts must be positive (examples {count}, L {slots}, L_b {lb})"
        )));
    }
    if data_slot_count > slots {
        return Err(Error::Corrupt(format!(
            "data slot count {data_slot_count} exceeds L = {slots}"
        )));
    }

    let width = 4 * lb;
    let mut examples = Vec::with_capacity(count.min(1 << 20));
    let mut bit_buf = vec![0u8; slots];
    let mut float_buf = vec![0u8; 4 * width];
    for i in 0..count {
        let [flag] = read_array(&mut r, "example payload")?;
        read_exact(&mut r, &mut bit_buf)?;
        let target = byte_to_bool(flag, i)?;
        let bits = bit_buf
            .iter()
            .map(|&b| byte_to_bool(b, i))
            .collect::<Result<Vec<_>>>()?;
        let bits = BitFrame::with_data_slots(bits, data_slot_count)?;
        let mut slot_inputs = Vec::with_capacity(slots);
        for _ in 0..slots {
            read_exact(&mut r, &mut float_buf)?;
            let slot: Vec<f64> = float_buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if slot.iter().any(|v| !v.is_finite()) {
                return Err(Error::Corrupt(format!("example {i}: non-finite input")));
            }
            slot_inputs.push(slot);
        }
        examples.push(Example {
            inputs: ReceivedFrame {
                slot_inputs,
                noise_variance,
            },
            bits,
            target,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Corrupt("trailing bytes after last example".into()));
    }
    Ok(Dataset {
        slots,
        bandwidth_expansion: lb,
        snr_db,
        master_seed,
        data_slot_count,
        noise_variance,
        examples,
    })
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated("example payload"),
        _ => e.into(),
    })
}

fn byte_to_bool(b: u8, example: usize) -> Result<bool> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::Corrupt(format!(
            "example {example}: binary byte has value {other}"
        ))),
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    read_dataset(&bytes[..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(slots: usize, lb: usize, mode: Mode) -> DatasetSpec {
        DatasetSpec {
            slots,
            bandwidth_expansion: lb,
            mode,
        }
    }

    fn small(seed: u64) -> Dataset {
        generate_dataset(
            &ChannelConfig::default(),
            &spec(16, 2, Mode::Isac),
            10,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn shapes() {
        let d =
            generate_dataset(&ChannelConfig::default(), &spec(80, 1, Mode::Isac), 100, 0).unwrap();
        assert_eq!(d.len(), 100);
        for ex in &d.examples {
            assert_eq!(ex.inputs.slot_count(), 80);
            assert_eq!(ex.bits.len(), 80);
            assert!(ex.inputs.slot_inputs.iter().all(|s| s.len() == 4));
        }
        assert!((d.noise_variance - 0.55).abs() < 1e-12);
    }

    #[test]
    fn target_prior_is_balanced() {
        // Binomial(10^4, 1/2) has standard deviation 0.005 on the mean.
        let cfg = ChannelConfig::default();
        let s = spec(1, 1, Mode::Isac);
        let n = 10_000u64;
        let hits = (0..n)
            .filter(|&i| generate_example(&cfg, &s, 3, i).unwrap().target)
            .count();
        let mean = hits as f64 / n as f64;
        assert!((mean - 0.5).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(small(5), small(5));
        assert_ne!(small(5).examples, small(6).examples);
    }

    #[test]
    fn example_regenerates_alone() {
        let d = small(8);
        let s = spec(16, 2, Mode::Isac);
        for i in [0usize, 4, 9] {
            let ex = generate_example(&ChannelConfig::default(), &s, 8, i as u64).unwrap();
            assert_eq!(ex, d.examples[i]);
        }
    }

    #[test]
    fn ssac_sensing_slots_carry_ones() {
        let d = generate_dataset(
            &ChannelConfig::default(),
            &spec(10, 1, Mode::Ssac { alpha: 0.3 }),
            20,
            1,
        )
        .unwrap();
        assert_eq!(d.data_slot_count, 3);
        for ex in &d.examples {
            assert_eq!(ex.bits.data_slot_count(), 3);
            assert!(ex.bits.bits()[3..].iter().all(|&b| b));
        }
    }

    #[test]
    fn invalid_mode_rejected() {
        assert!(generate_dataset(
            &ChannelConfig::default(),
            &spec(10, 1, Mode::Ssac { alpha: 1.5 }),
            2,
            0
        )
        .is_err());
    }

    #[test]
    fn round_trip_bit_exact() {
        let d = small(2);
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 10 * (1 + 16 + 16 * 8 * 4));
        assert_eq!(read_dataset(&buf[..]).unwrap(), d);
    }

    #[test]
    fn round_trip_through_file() {
        let d = generate_dataset(
            &ChannelConfig::default(),
            &spec(8, 1, Mode::Ssac { alpha: 0.5 }),
            4,
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.nisd");
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn read_errors_are_distinct() {
        let mut buf = Vec::new();
        write_dataset(&small(4), &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[..4].copy_from_slice(b"NISM");
        assert!(matches!(
            read_dataset(&bad[..]),
            Err(Error::BadMagic { .. })
        ));

        let mut bad = buf.clone();
        bad[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_dataset(&bad[..]),
            Err(Error::VersionMismatch { found: 2, .. })
        ));

        let mut bad = buf.clone();
        bad[8..12].copy_from_slice(&11u32.to_le_bytes());
        assert!(matches!(read_dataset(&bad[..]), Err(Error::Truncated(_))));

        assert!(matches!(read_dataset(&buf[..20]), Err(Error::Truncated(_))));

        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_dataset(&bad[..]), Err(Error::Corrupt(_))));

        let mut bad = buf.clone();
        bad[48] = 7;
        assert!(matches!(read_dataset(&bad[..]), Err(Error::Corrupt(_))));
    }

    #[test]
    fn stored_floats_finite() {
        let d = small(9);
        assert!(d
            .examples
            .iter()
            .flat_map(|e| e.inputs.slot_inputs.iter().flatten())
            .all(|v| v.is_finite()));
    }
}
