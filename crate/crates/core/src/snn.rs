//! Discrete-time spike response model (SRM) receiver network.
//!
//! Topology is feedforward: `4 L_b` analog inputs drive `H` hidden spiking
//! neurons, whose spikes drive two readout neurons in the same time step. The
//! readout neuron [`COMM`] produces the bit estimate and [`SENSE`] the per-slot
//! target decision. One SNN time step consumes one slot.
//!
//! Each neuron keeps three traces, updated once per step:
//!
//! ```text
//! q ← e^{-1/τ_syn} q + Σ_j w_j u_j        (fast synaptic trace)
//! r ← e^{-1/τ_mem} r + q                  (second-order synaptic response)
//! s ← e^{-1/τ_ref} s + b_prev             (own-spike refractory trace)
//! o = r − ϑ s
//! b = Θ(o − ϑ)
//! ```
//!
//! The cascaded `q`/`r` traces realize the double-exponential synaptic kernel
//! with the current input included in the current step, and `− ϑ s` resets the
//! potential by subtraction after each spike.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::channel::ReceivedFrame;
use crate::{Error, Result};

/// Readout index of the communication neuron.
pub const COMM: usize = 0;
/// Readout index of the radar sensing neuron.
pub const SENSE: usize = 1;
pub const READOUT_COUNT: usize = 2;

/// Thresholds and time constants shared by all neurons of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub hidden_threshold: f64,
    pub readout_threshold: f64,
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            hidden_threshold: 1.0,
            readout_threshold: 0.0,
            tau_mem: 1.0,
            tau_syn: 0.5,
            tau_ref: 0.5,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        let taus = [self.tau_mem, self.tau_syn, self.tau_ref];
        if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidModel(
                "time constants must be positive and finite".into(),
            ));
        }
        if self.tau_mem <= self.tau_syn {
            return Err(Error::InvalidModel(format!(
                "tau_mem ({}) must exceed tau_syn ({})",
                self.tau_mem, self.tau_syn
            )));
        }
        if !(self.hidden_threshold.is_finite() && self.readout_threshold.is_finite()) {
            return Err(Error::InvalidModel("thresholds must be finite".into()));
        }
        Ok(())
    }

    pub fn decays(&self) -> Decays {
        Decays {
            syn: (-1.0 / self.tau_syn).exp(),
            mem: (-1.0 / self.tau_mem).exp(),
            refr: (-1.0 / self.tau_ref).exp(),
        }
    }
}

/// Per-step decay factors of the three traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decays {
    pub syn: f64,
    pub mem: f64,
    pub refr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    /// `H × 4 L_b`, input to hidden.
    pub input_weights: Array2<f64>,
    /// `2 × H`, hidden to readout (rows [`COMM`], [`SENSE`]).
    pub readout_weights: Array2<f64>,
    pub hidden_threshold: f64,
    pub readout_threshold: f64,
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
}

impl SnnModel {
    /// Weights i.i.d. uniform on `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(
        hidden_count: usize,
        bandwidth_expansion: usize,
        params: NeuronParams,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden_count < 1 {
            return Err(Error::InvalidModel(
                "hidden_count must be at least 1".into(),
            ));
        }
        if bandwidth_expansion < 1 {
            return Err(Error::InvalidBandwidthExpansion(bandwidth_expansion));
        }
        params.validate()?;
        let input_width = 4 * bandwidth_expansion;
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
        };
        let input_weights = uniform(hidden_count, input_width);
        let readout_weights = uniform(READOUT_COUNT, hidden_count);
        Ok(Self::from_parts(input_weights, readout_weights, params))
    }

    /// All-zero weights.
    pub fn zeros(hidden_count: usize, input_width: usize, params: NeuronParams) -> Self {
        Self::from_parts(
            Array2::zeros((hidden_count, input_width)),
            Array2::zeros((READOUT_COUNT, hidden_count)),
            params,
        )
    }

    pub fn from_parts(
        input_weights: Array2<f64>,
        readout_weights: Array2<f64>,
        params: NeuronParams,
    ) -> Self {
        Self {
            input_weights,
            readout_weights,
            hidden_threshold: params.hidden_threshold,
            readout_threshold: params.readout_threshold,
            tau_mem: params.tau_mem,
            tau_syn: params.tau_syn,
            tau_ref: params.tau_ref,
        }
    }

    pub fn params(&self) -> NeuronParams {
        NeuronParams {
            hidden_threshold: self.hidden_threshold,
            readout_threshold: self.readout_threshold,
            tau_mem: self.tau_mem,
            tau_syn: self.tau_syn,
            tau_ref: self.tau_ref,
        }
    }

    pub fn hidden_count(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.input_weights.ncols()
    }

    /// Bandwidth expansion factor implied by the input width.
    pub fn bandwidth_expansion(&self) -> usize {
        self.input_width() / 4
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.readout_weights.dim() != (READOUT_COUNT, self.hidden_count()) {
            return Err(Error::DimensionMismatch(format!(
                "readout weights {:?}, expected ({READOUT_COUNT}, {})",
                self.readout_weights.dim(),
                self.hidden_count()
            )));
        }
        let finite = self
            .input_weights
            .iter()
            .chain(self.readout_weights.iter())
            .all(|w| w.is_finite());
        if !finite {
            return Err(Error::InvalidModel("non-finite weight".into()));
        }
        Ok(())
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&self) -> usize {
        self.input_weights.len() + self.readout_weights.len()
    }
}

/// Map from pre-threshold potential offset `o − ϑ` to the emitted spike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    /// Heaviside `Θ(x)`, `Θ(0) = 0`.
    Hard,
    /// Smooth spike `σ(slope · x)`.
    Sigmoid { slope: f64 },
}

impl SpikeFn {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            SpikeFn::Hard => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::Sigmoid { slope } => sigmoid(slope * x),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trace state of one layer. Zero at the start of every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronState {
    pub syn_fast: Vec<f64>,
    pub syn_slow: Vec<f64>,
    pub refractory: Vec<f64>,
    pub potential: Vec<f64>,
}

impl NeuronState {
    pub fn zeros(neurons: usize) -> Self {
        Self {
            syn_fast: vec![0.0; neurons],
            syn_slow: vec![0.0; neurons],
            refractory: vec![0.0; neurons],
            potential: vec![0.0; neurons],
        }
    }

    pub fn len(&self) -> usize {
        self.potential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_empty()
    }
}

/// Advances one layer by one step in place and writes the emitted spikes.
pub fn srm_step_in_place(
    state: &mut NeuronState,
    weighted_input: &[f64],
    own_prev_spike: &[f64],
    threshold: f64,
    decays: Decays,
    spike_fn: SpikeFn,
    spikes: &mut [f64],
) {
    for k in 0..state.len() {
        let q = decays.syn * state.syn_fast[k] + weighted_input[k];
        let r = decays.mem * state.syn_slow[k] + q;
        let s = decays.refr * state.refractory[k] + own_prev_spike[k];
        let o = r - threshold * s;
        state.syn_fast[k] = q;
        state.syn_slow[k] = r;
        state.refractory[k] = s;
        state.potential[k] = o;
        spikes[k] = spike_fn.apply(o - threshold);
    }
}

/// One SRM step of a layer. Returns the new state and the emitted spikes; the
/// potentials are in `state.potential`.
pub fn srm_step(
    state: &NeuronState,
    weighted_input: &[f64],
    own_prev_spike: &[f64],
    threshold: f64,
    decays: Decays,
    spike_fn: SpikeFn,
) -> Result<(NeuronState, Vec<f64>)> {
    let n = state.len();
    for (what, len) in [
        ("weighted input", weighted_input.len()),
        ("previous spikes", own_prev_spike.len()),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch(format!(
                "{what} has {len} entries for {n} neurons"
            )));
        }
    }
    let mut next = state.clone();
    let mut spikes = vec![0.0; n];
    srm_step_in_place(
        &mut next,
        weighted_input,
        own_prev_spike,
        threshold,
        decays,
        spike_fn,
        &mut spikes,
    );
    Ok((next, spikes))
}

/// Recorded per-step values of one layer, each `L × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub syn_fast: Array2<f64>,
    pub syn_slow: Array2<f64>,
    pub refractory: Array2<f64>,
    pub potential: Array2<f64>,
    pub spikes: Array2<f64>,
}

impl LayerTrace {
    fn zeros(steps: usize, neurons: usize) -> Self {
        let z = || Array2::zeros((steps, neurons));
        Self {
            syn_fast: z(),
            syn_slow: z(),
            refractory: z(),
            potential: z(),
            spikes: z(),
        }
    }

    fn record(&mut self, step: usize, state: &NeuronState, spikes: &[f64]) {
        let rows = [
            (&mut self.syn_fast, &state.syn_fast),
            (&mut self.syn_slow, &state.syn_slow),
            (&mut self.refractory, &state.refractory),
            (&mut self.potential, &state.potential),
        ];
        for (dst, src) in rows {
            dst.row_mut(step).assign(&ArrayView1::from(&src[..]));
        }
        self.spikes.row_mut(step).assign(&ArrayView1::from(spikes));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub hidden: LayerTrace,
    pub readout: LayerTrace,
    pub spike_fn: SpikeFn,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.hidden.potential.nrows()
    }

    /// `x̂_l`, the communication readout spikes.
    pub fn comm_decisions(&self) -> Vec<bool> {
        self.readout_decisions(COMM)
    }

    /// `v̂_l`, the sensing readout spikes.
    pub fn sense_decisions(&self) -> Vec<bool> {
        self.readout_decisions(SENSE)
    }

    fn readout_decisions(&self, neuron: usize) -> Vec<bool> {
        self.readout
            .spikes
            .column(neuron)
            .iter()
            .map(|&b| b > 0.5)
            .collect()
    }
}

pub fn forward(model: &SnnModel, frame: &ReceivedFrame) -> Result<ForwardTrace> {
    run(model, frame, SpikeFn::Hard)
}

/// Runs the network over every slot of `frame`, starting from zero state.
pub fn run(model: &SnnModel, frame: &ReceivedFrame, spike_fn: SpikeFn) -> Result<ForwardTrace> {
    let width = model.input_width();
    if let Some((l, slot)) = frame
        .slot_inputs
        .iter()
        .enumerate()
        .find(|(_, s)| s.len() != width)
    {
        return Err(Error::DimensionMismatch(format!(
            "slot {l} has {} inputs, model expects {width}",
            slot.len()
        )));
    }
    let steps = frame.slot_count();
    let h = model.hidden_count();
    let decays = model.params().decays();

    let mut trace = ForwardTrace {
        hidden: LayerTrace::zeros(steps, h),
        readout: LayerTrace::zeros(steps, READOUT_COUNT),
        spike_fn,
    };
    let mut hidden = NeuronState::zeros(h);
    let mut readout = NeuronState::zeros(READOUT_COUNT);
    let mut hidden_spikes = vec![0.0; h];
    let mut hidden_prev = vec![0.0; h];
    let mut readout_spikes = [0.0; READOUT_COUNT];
    let mut readout_prev = [0.0; READOUT_COUNT];
    let mut hidden_drive = vec![0.0; h];
    let mut readout_drive = [0.0; READOUT_COUNT];

    for (l, input) in frame.slot_inputs.iter().enumerate() {
        for (k, drive) in hidden_drive.iter_mut().enumerate() {
            *drive = dot(model.input_weights.row(k), input);
        }
        srm_step_in_place(
            &mut hidden,
            &hidden_drive,
            &hidden_prev,
            model.hidden_threshold,
            decays,
            spike_fn,
            &mut hidden_spikes,
        );
        for (m, drive) in readout_drive.iter_mut().enumerate() {
            *drive = dot(model.readout_weights.row(m), &hidden_spikes);
        }
        srm_step_in_place(
            &mut readout,
            &readout_drive,
            &readout_prev,
            model.readout_threshold,
            decays,
            spike_fn,
            &mut readout_spikes,
        );
        trace.hidden.record(l, &hidden, &hidden_spikes);
        trace.readout.record(l, &readout, &readout_spikes);
        hidden_prev.copy_from_slice(&hidden_spikes);
        readout_prev = readout_spikes;
    }
    Ok(trace)
}

fn dot(row: ArrayView1<f64>, x: &[f64]) -> f64 {
    row.iter().zip(x).map(|(w, v)| w * v).sum()
}

/// `(p^c_l, p^s_l) = (σ(o_{c,l}), σ(o_{s,l}))`.
pub fn readout_probabilities(trace: &ForwardTrace) -> (Vec<f64>, Vec<f64>) {
    let o = &trace.readout.potential;
    (
        o.column(COMM).iter().map(|&v| sigmoid(v)).collect(),
        o.column(SENSE).iter().map(|&v| sigmoid(v)).collect(),
    )
}

/// Number of spikes emitted by all neurons (hidden and readout) at each step.
pub fn spike_count(trace: &ForwardTrace) -> Vec<usize> {
    let count = |a: &Array2<f64>, l: usize| a.row(l).iter().filter(|&&b| b > 0.5).count();
    (0..trace.steps())
        .map(|l| count(&trace.hidden.spikes, l) + count(&trace.readout.spikes, l))
        .collect()
}

const MODEL_MAGIC: [u8; 4] = *b"NISM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// NISM layout, little-endian: magic, version `u32`, `H` `u32`, input width
/// `u32`, row-major `f64` input weights then readout weights, then hidden
/// threshold, readout threshold, `τ_mem`, `τ_syn`, `τ_ref` as `f64`.
pub fn write_model<W: Write>(model: &SnnModel, mut w: W) -> Result<()> {
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.hidden_count() as u32).to_le_bytes())?;
    w.write_all(&(model.input_width() as u32).to_le_bytes())?;
    for v in model
        .input_weights
        .iter()
        .chain(model.readout_weights.iter())
    {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [
        model.hidden_threshold,
        model.readout_threshold,
        model.tau_mem,
        model.tau_syn,
        model.tau_ref,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<SnnModel> {
    let magic: [u8; 4] = read_array(&mut r, "model magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            expected: MODEL_MAGIC,
            found: magic,
        });
    }
    let version = u32::from_le_bytes(read_array(&mut r, "model version")?);
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_FORMAT_VERSION,
            found: version,
        });
    }
    let h = u32::from_le_bytes(read_array(&mut r, "model dims")?) as usize;
    let width = u32::from_le_bytes(read_array(&mut r, "model dims")?) as usize;
    if h == 0 || width == 0 {
        return Err(Error::Corrupt(format!("model dims {h}x{width}")));
    }
    let mut read_f64s = |n: usize, what| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| read_array(&mut r, what).map(f64::from_le_bytes))
            .collect()
    };
    let input = read_f64s(h * width, "input weights")?;
    let readout = read_f64s(READOUT_COUNT * h, "readout weights")?;
    let tail = read_f64s(5, "neuron parameters")?;
    let params = NeuronParams {
        hidden_threshold: tail[0],
        readout_threshold: tail[1],
        tau_mem: tail[2],
        tau_syn: tail[3],
        tau_ref: tail[4],
    };
    let shape_err = |e: ndarray::ShapeError| Error::Corrupt(e.to_string());
    let model = SnnModel::from_parts(
        Array2::from_shape_vec((h, width), input).map_err(shape_err)?,
        Array2::from_shape_vec((READOUT_COUNT, h), readout).map_err(shape_err)?,
        params,
    );
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &SnnModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SnnModel> {
    read_model(BufReader::new(File::open(path)?))
}

/// Reads a fixed-size chunk, reporting end-of-file as truncation.
pub(crate) fn read_array<R: Read, const N: usize>(
    r: &mut R,
    what: &'static str,
) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    match r.read_exact(&mut buf) {
        Ok(()) => Ok(buf),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(Error::Truncated(what)),
        Err(e) => Err(e.into()),
    }
}
