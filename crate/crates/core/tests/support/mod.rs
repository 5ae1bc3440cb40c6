//! Finite-difference oracle for the smoothed network.
//!
//! The oracle evaluates the network through explicit convolution sums instead
//! of the per-step trace recursions used by the library:
//!
//! ```text
//! o_l = Σ_{n=0}^{l} K(n) in_{l-n} − ϑ Σ_{n=1}^{l} a_ref^{n-1} b_{l-n}
//! K(n) = Σ_{i=0}^{n} a_mem^{n-i} a_syn^{i}
//! ```
//!
//! and computes the loss with log-sigmoids of the readout potentials.

// Shared between test targets; not every target uses every item.
#![allow(dead_code)]

use nisac_core::channel::ChannelConfig;
use nisac_core::dataset::{generate_example, DatasetSpec, Example, Mode};
use nisac_core::seed::{derive_rng, stream};
use nisac_core::snn::{NeuronParams, SnnModel};
use nisac_core::training::{backward, surrogate_forward, Objective, Role};

pub const FD_STEP: f64 = 1e-5;
pub const MAX_REL_ERROR: f64 = 1e-4;
/// Denominator floor so that gradients that vanish to rounding level are
/// compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One smooth layer evaluated by explicit convolution of its whole history.
fn layer_by_convolution(
    drive: &[Vec<f64>],
    threshold: f64,
    params: &NeuronParams,
    slope: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let a_syn = (-1.0 / params.tau_syn).exp();
    let a_mem = (-1.0 / params.tau_mem).exp();
    let a_ref = (-1.0 / params.tau_ref).exp();
    let kernel = |n: usize| -> f64 {
        (0..=n)
            .map(|i| a_mem.powi((n - i) as i32) * a_syn.powi(i as i32))
            .sum()
    };
    let steps = drive.len();
    let neurons = drive[0].len();
    let mut potentials = vec![vec![0.0; neurons]; steps];
    let mut spikes = vec![vec![0.0; neurons]; steps];
    for l in 0..steps {
        for k in 0..neurons {
            let synaptic: f64 = (0..=l).map(|n| kernel(n) * drive[l - n][k]).sum();
            let refractory: f64 = (1..=l)
                .map(|n| a_ref.powi(n as i32 - 1) * spikes[l - n][k])
                .sum();
            let o = synaptic - threshold * refractory;
            potentials[l][k] = o;
            spikes[l][k] = sigma(slope * (o - threshold));
        }
    }
    (potentials, spikes)
}

pub fn oracle_loss(model: &SnnModel, example: &Example, beta: f64, slope: f64) -> f64 {
    let params = model.params();
    let w = &model.input_weights;
    let u = &model.readout_weights;
    let hidden_drive: Vec<Vec<f64>> = example
        .inputs
        .slot_inputs
        .iter()
        .map(|y| {
            (0..w.nrows())
                .map(|k| (0..w.ncols()).map(|j| w[[k, j]] * y[j]).sum())
                .collect()
        })
        .collect();
    let (_, hidden_spikes) =
        layer_by_convolution(&hidden_drive, params.hidden_threshold, &params, slope);
    let readout_drive: Vec<Vec<f64>> = hidden_spikes
        .iter()
        .map(|b| {
            (0..2)
                .map(|m| (0..u.ncols()).map(|k| u[[m, k]] * b[k]).sum())
                .collect()
        })
        .collect();
    let (readout, _) =
        layer_by_convolution(&readout_drive, params.readout_threshold, &params, slope);

    let ce = |o: f64, label: bool| {
        if label {
            -log_sigmoid(o)
        } else {
            -log_sigmoid(-o)
        }
    };
    let comm: f64 = readout
        .iter()
        .zip(example.bits.bits())
        .map(|(o, &x)| ce(o[0], x))
        .sum();
    let sense: f64 = readout.iter().map(|o| ce(o[1], example.target)).sum();
    beta * comm + (1.0 - beta) * sense
}

pub fn instance(seed: u64, hidden: usize, slots: usize) -> (SnnModel, Example) {
    let mut rng = derive_rng(seed, stream::INIT, 0);
    let model = SnnModel::init(hidden, 1, NeuronParams::default(), &mut rng).unwrap();
    let spec = DatasetSpec {
        slots,
        bandwidth_expansion: 1,
        mode: Mode::Isac,
    };
    let example = generate_example(&ChannelConfig::default(), &spec, seed, 0).unwrap();
    (model, example)
}

pub fn max_relative_error(seed: u64, hidden: usize, slots: usize, beta: f64, slope: f64) -> f64 {
    let (model, ex) = instance(seed, hidden, slots);
    let objective = Objective::for_role(Role::Isac, beta).unwrap();
    let trace = surrogate_forward(&model, &ex.inputs, slope).unwrap();
    let analytic = backward(
        &model, &trace, &ex.inputs, &ex.bits, ex.target, &objective, slope,
    )
    .unwrap();

    assert!(
        analytic.iter().any(|g| g.abs() > 1e-3),
        "degenerate instance: all gradients vanish"
    );

    let mut worst: f64 = 0.0;
    let mut check = |which: usize, idx: (usize, usize), g: f64| {
        let eval = |delta: f64| {
            let mut m = model.clone();
            let w = if which == 0 {
                &mut m.input_weights
            } else {
                &mut m.readout_weights
            };
            w[idx] += delta;
            oracle_loss(&m, &ex, beta, slope)
        };
        let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    };
    for (idx, &g) in analytic.input_weights.indexed_iter() {
        check(0, idx, g);
    }
    for (idx, &g) in analytic.readout_weights.indexed_iter() {
        check(1, idx, g);
    }
    worst
}
