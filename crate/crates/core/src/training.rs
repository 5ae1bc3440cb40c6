//! Dual cross-entropy objective and surrogate-gradient training.
//!
//! The communication loss sums the bit cross-entropy of `σ(o_comm)` over the
//! data slots; the sensing loss sums the target cross-entropy of `σ(o_sense)`
//! over the sensing slots. They are mixed as `β L^c + (1 − β) L^s`.
//!
//! Gradients are exact reverse-mode derivatives through the unrolled trace
//! recursions of [`crate::snn`], with the derivative of every threshold
//! replaced by that of `σ(slope · x)`.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, Zip};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::channel::ReceivedFrame;
use crate::dataset::Example;
use crate::metrics::majority_detection;
use crate::modem::BitFrame;
use crate::seed::{derive_rng, stream};
use crate::snn::{
    self, sigmoid, Decays, ForwardTrace, SnnModel, SpikeFn, COMM, READOUT_COUNT, SENSE,
};
use crate::{Error, Result};

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logarithms.
pub const PROB_EPS: f64 = 1e-14;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn binary_cross_entropy(p: f64, label: bool) -> f64 {
    let p = clamp_prob(p);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Communication cross-entropy over the data slots of `bits`.
pub fn comm_loss(p_comm: &[f64], bits: &BitFrame) -> Result<f64> {
    if p_comm.len() != bits.len() {
        return Err(Error::LengthMismatch {
            expected: bits.len(),
            actual: p_comm.len(),
        });
    }
    Ok(p_comm
        .iter()
        .zip(bits.data_bits())
        .map(|(&p, &x)| binary_cross_entropy(p, x))
        .sum())
}

/// Sensing cross-entropy of every given step against the single label `v`.
pub fn sense_loss(p_sense: &[f64], target: bool) -> f64 {
    p_sense
        .iter()
        .map(|&p| binary_cross_entropy(p, target))
        .sum()
}

pub fn isac_loss(comm: f64, sense: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(beta * comm + (1.0 - beta) * sense)
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub comm: f64,
    pub sense: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(comm: f64, sense: f64, beta: f64) -> Self {
        Self {
            comm,
            sense,
            total: beta * comm + (1.0 - beta) * sense,
        }
    }
}

/// Which function a trained network serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// One network decodes and senses on every slot.
    Isac,
    /// Separate scheme, decoding network: data slots only.
    SsacComm,
    /// Separate scheme, sensing network: sensing slots only.
    SsacSense,
}

/// Loss weighting and the slots on which sensing is scored.
///
/// Communication is always scored on the data slots of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub beta: f64,
    pub role: Role,
}

impl Objective {
    pub fn isac(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            beta,
            role: Role::Isac,
        })
    }

    pub fn for_role(role: Role, beta: f64) -> Result<Self> {
        match role {
            Role::Isac => Self::isac(beta),
            Role::SsacComm => Ok(Self { beta: 1.0, role }),
            Role::SsacSense => Ok(Self { beta: 0.0, role }),
        }
    }

    pub fn sense_slots(&self, bits: &BitFrame) -> Range<usize> {
        match self.role {
            Role::Isac => 0..bits.len(),
            Role::SsacComm | Role::SsacSense => bits.data_slot_count()..bits.len(),
        }
    }

    pub fn loss(
        &self,
        trace: &ForwardTrace,
        bits: &BitFrame,
        target: bool,
    ) -> Result<LossBreakdown> {
        let (pc, ps) = snn::readout_probabilities(trace);
        let comm = comm_loss(&pc, bits)?;
        let sense = sense_loss(&ps[self.sense_slots(bits)], target);
        Ok(LossBreakdown::new(comm, sense, self.beta))
    }
}

/// Gradient with the shape of the model's trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub input_weights: Array2<f64>,
    pub readout_weights: Array2<f64>,
}

impl Gradient {
    pub fn zeros_like(model: &SnnModel) -> Self {
        Self {
            input_weights: Array2::zeros(model.input_weights.raw_dim()),
            readout_weights: Array2::zeros(model.readout_weights.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        self.input_weights += &other.input_weights;
        self.readout_weights += &other.readout_weights;
    }

    pub fn scale(&mut self, factor: f64) {
        self.input_weights *= factor;
        self.readout_weights *= factor;
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.input_weights.iter().chain(self.readout_weights.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

/// Derivative of `σ(slope · x)`.
pub fn surrogate_derivative(x: f64, slope: f64) -> f64 {
    let s = sigmoid(slope * x);
    slope * s * (1.0 - s)
}

/// Fully smoothed twin of [`snn::forward`]: spikes are `σ(slope (o − ϑ))`.
pub fn surrogate_forward(
    model: &SnnModel,
    frame: &ReceivedFrame,
    slope: f64,
) -> Result<ForwardTrace> {
    snn::run(model, frame, SpikeFn::Sigmoid { slope })
}

/// Reverse pass through one layer's trace recursions.
///
/// `direct` holds `∂L/∂o` from the loss, `external` holds `∂L/∂b` from the
/// layer downstream. Returns `∂L/∂(weighted input)` for every step and neuron.
fn layer_backward(
    potential: &Array2<f64>,
    threshold: f64,
    decays: Decays,
    slope: f64,
    direct: &Array2<f64>,
    external: &Array2<f64>,
) -> Array2<f64> {
    let (steps, neurons) = potential.dim();
    let mut grad_in = Array2::zeros((steps, neurons));
    for k in 0..neurons {
        let (mut carry_r, mut carry_q, mut carry_s, mut carry_b) = (0.0, 0.0, 0.0, 0.0);
        for l in (0..steps).rev() {
            let g_b = carry_b + external[[l, k]];
            let g_o =
                direct[[l, k]] + g_b * surrogate_derivative(potential[[l, k]] - threshold, slope);
            let g_r = carry_r + g_o;
            let g_s = carry_s - threshold * g_o;
            let g_q = carry_q + g_r;
            grad_in[[l, k]] = g_q;
            carry_r = decays.mem * g_r;
            carry_q = decays.syn * g_q;
            carry_s = decays.refr * g_s;
            carry_b = g_s;
        }
    }
    grad_in
}

/// `∂L/∂o` of the loss with respect to each readout potential.
fn readout_sensitivity(
    trace: &ForwardTrace,
    bits: &BitFrame,
    target: bool,
    objective: &Objective,
) -> Array2<f64> {
    let steps = trace.steps();
    let o = &trace.readout.potential;
    let mut direct = Array2::zeros((steps, READOUT_COUNT));
    for (l, &x) in bits.data_bits().iter().enumerate() {
        let p = sigmoid(o[[l, COMM]]);
        direct[[l, COMM]] = objective.beta * (p - f64::from(u8::from(x)));
    }
    let v = f64::from(u8::from(target));
    for l in objective.sense_slots(bits) {
        let p = sigmoid(o[[l, SENSE]]);
        direct[[l, SENSE]] = (1.0 - objective.beta) * (p - v);
    }
    direct
}

pub fn backward(
    model: &SnnModel,
    trace: &ForwardTrace,
    frame: &ReceivedFrame,
    bits: &BitFrame,
    target: bool,
    objective: &Objective,
    slope: f64,
) -> Result<Gradient> {
    let steps = trace.steps();
    let h = model.hidden_count();
    if trace.hidden.potential.ncols() != h
        || frame.slot_count() != steps
        || bits.len() != steps
        || frame.input_width() != model.input_width()
    {
        return Err(Error::DimensionMismatch(format!(
            "trace {}x{h}, frame {} slots of width {}, {} bits, model {}x{}",
            steps,
            frame.slot_count(),
            frame.input_width(),
            bits.len(),
            model.hidden_count(),
            model.input_width()
        )));
    }
    let decays = model.params().decays();

    let direct = readout_sensitivity(trace, bits, target, objective);
    let readout_in = layer_backward(
        &trace.readout.potential,
        model.readout_threshold,
        decays,
        slope,
        &direct,
        &Array2::zeros((steps, READOUT_COUNT)),
    );
    // ∂L/∂b_hidden = Uᵀ ∂L/∂(readout drive)
    let hidden_external = readout_in.dot(&model.readout_weights);
    let hidden_in = layer_backward(
        &trace.hidden.potential,
        model.hidden_threshold,
        decays,
        slope,
        &Array2::zeros((steps, h)),
        &hidden_external,
    );

    let mut grad = Gradient::zeros_like(model);
    grad.readout_weights = readout_in.t().dot(&trace.hidden.spikes);
    for (l, input) in frame.slot_inputs.iter().enumerate() {
        let g = hidden_in.row(l);
        let x = ArrayView1::from(&input[..]);
        Zip::from(grad.input_weights.rows_mut())
            .and(&g)
            .for_each(|mut row, &gk| row.scaled_add(gk, &x));
    }
    Ok(grad)
}

pub fn sgd_step(model: &mut SnnModel, gradient: &Gradient, learning_rate: f64) -> Result<()> {
    if gradient.input_weights.dim() != model.input_weights.dim()
        || gradient.readout_weights.dim() != model.readout_weights.dim()
    {
        return Err(Error::DimensionMismatch(
            "gradient shape does not match model".into(),
        ));
    }
    model
        .input_weights
        .scaled_add(-learning_rate, &gradient.input_weights);
    model
        .readout_weights
        .scaled_add(-learning_rate, &gradient.readout_weights);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub surrogate_slope: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 50,
            batch_size: 32,
            surrogate_slope: DEFAULT_SURROGATE_SLOPE,
            seed: 0,
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.02;
pub const DEFAULT_SURROGATE_SLOPE: f64 = 3.0;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        let checks = [
            (
                self.learning_rate > 0.0 && self.learning_rate.is_finite(),
                "learning rate",
            ),
            (self.epochs > 0, "epochs"),
            (self.batch_size > 0, "batch size"),
            (
                self.surrogate_slope > 0.0 && self.surrogate_slope.is_finite(),
                "surrogate slope",
            ),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidTraining(format!("{what} must be positive")));
            }
        }
        Ok(())
    }
}

/// Mean per-example values of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub train_throughput: f64,
    pub train_det_error: f64,
}

struct ExampleStep {
    gradient: Gradient,
    losses: LossBreakdown,
    correct_bits: usize,
    slots: usize,
    detection_wrong: bool,
}

fn example_step(
    model: &SnnModel,
    example: &Example,
    objective: &Objective,
    slope: f64,
) -> Result<ExampleStep> {
    let trace = snn::forward(model, &example.inputs)?;
    let losses = objective.loss(&trace, &example.bits, example.target)?;
    let gradient = backward(
        model,
        &trace,
        &example.inputs,
        &example.bits,
        example.target,
        objective,
        slope,
    )?;
    let decisions = trace.comm_decisions();
    let correct_bits = decisions
        .iter()
        .zip(example.bits.data_bits())
        .filter(|(a, b)| a == b)
        .count();
    let votes = &trace.sense_decisions()[objective.sense_slots(&example.bits)];
    let detection_wrong = !votes.is_empty() && majority_detection(votes)? != example.target;
    Ok(ExampleStep {
        gradient,
        losses,
        correct_bits,
        slots: example.bits.len(),
        detection_wrong,
    })
}

/// Minibatch SGD over shuffled epochs. Deterministic given the inputs: the
/// shuffle stream derives from `cfg.seed` and per-example gradients are
/// reduced in batch order.
pub fn train(
    model: &SnnModel,
    dataset: &[Example],
    cfg: &TrainConfig,
    role: Role,
) -> Result<(SnnModel, Vec<EpochLog>)> {
    cfg.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let objective = Objective::for_role(role, cfg.beta)?;
    let mut model = model.clone();
    let mut rng = derive_rng(cfg.seed, stream::SHUFFLE, 0);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut comm, mut sense) = (0.0, 0.0);
        let (mut correct, mut slots, mut wrong) = (0usize, 0usize, 0usize);
        for (batch_index, batch) in order.chunks(cfg.batch_size).enumerate() {
            let steps: Vec<ExampleStep> = batch
                .par_iter()
                .map(|&i| example_step(&model, &dataset[i], &objective, cfg.surrogate_slope))
                .collect::<Result<_>>()?;
            let mut grad = Gradient::zeros_like(&model);
            for step in &steps {
                if !step.losses.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_index,
                    });
                }
                grad.add_assign(&step.gradient);
                comm += step.losses.comm;
                sense += step.losses.sense;
                correct += step.correct_bits;
                slots += step.slots;
                wrong += usize::from(step.detection_wrong);
            }
            if !grad.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            grad.scale(1.0 / batch.len() as f64);
            sgd_step(&mut model, &grad, cfg.learning_rate)?;
        }
        let n = dataset.len() as f64;
        log.push(EpochLog {
            epoch,
            losses: LossBreakdown::new(comm / n, sense / n, objective.beta),
            train_throughput: correct as f64 / slots as f64,
            train_det_error: wrong as f64 / n,
        });
    }
    Ok((model, log))
}
