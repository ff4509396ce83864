//! Training for rate decoding: each example is paired with assigned target
//! trains (a periodic spike pattern on the correct neuron, silence on the
//! rest) and the model maximizes their joint log-likelihood. The negative
//! objective is convex, so plain SGD converges robustly.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::encoding::{EncodedExample, SpikeTrain};
use crate::error::{Error, Result};
use crate::glm::{
    activation, log_activation, log_activation_complement, potentials_with_outputs, rho,
    KernelSet, ModelParams,
};
use crate::train::{input_weight_grads, run_epoch, GradientSet};

/// Target pattern for the correct neuron: one spike every `period` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesiredOutputScheme {
    period: usize,
}

impl DesiredOutputScheme {
    pub fn new(period: usize) -> Result<Self> {
        if period < 1 {
            return Err(Error::Domain("desired-output period must be at least 1".into()));
        }
        Ok(Self { period })
    }

    pub fn period(&self) -> usize {
        self.period
    }
}

impl Default for DesiredOutputScheme {
    /// One spike after every three zeros.
    fn default() -> Self {
        Self { period: 4 }
    }
}

/// The train neuron `neuron` is asked to emit for an example of class
/// `label`: spikes at steps period, 2*period, ... when the neuron matches
/// the class, all zeros otherwise.
pub fn desired_output(
    label: usize,
    neuron: usize,
    horizon: usize,
    scheme: &DesiredOutputScheme,
) -> SpikeTrain {
    if neuron != label {
        return SpikeTrain::zeros(horizon);
    }
    let samples = (1..=horizon)
        .map(|t| u8::from(t % scheme.period == 0))
        .collect();
    SpikeTrain::new(samples).expect("binary by construction")
}

fn check_example(params: &ModelParams, x: &EncodedExample) -> Result<()> {
    if x.inputs.len() != params.dims.n_x {
        return Err(Error::Shape(format!(
            "example has {} input trains, model expects {}",
            x.inputs.len(),
            params.dims.n_x
        )));
    }
    if x.horizon() != params.dims.horizon {
        return Err(Error::Shape(format!(
            "example horizon {} does not match model horizon {}",
            x.horizon(),
            params.dims.horizon
        )));
    }
    if x.label >= params.dims.n_y {
        return Err(Error::Shape(format!(
            "label {} out of range for {} neurons",
            x.label, params.dims.n_y
        )));
    }
    Ok(())
}

fn targets_and_potentials(
    params: &ModelParams,
    x: &EncodedExample,
    scheme: &DesiredOutputScheme,
) -> Result<(Vec<SpikeTrain>, Array2<f64>)> {
    check_example(params, x)?;
    let kernels = KernelSet::from_params(params);
    let targets: Vec<SpikeTrain> = (0..params.dims.n_y)
        .map(|i| desired_output(x.label, i, params.dims.horizon, scheme))
        .collect();
    let u = potentials_with_outputs(&kernels, x, &targets)?;
    Ok((targets, u))
}

/// Joint log-likelihood of the assigned target trains.
pub fn loglik_conventional(
    params: &ModelParams,
    x: &EncodedExample,
    scheme: &DesiredOutputScheme,
) -> Result<f64> {
    let (targets, u) = targets_and_potentials(params, x, scheme)?;
    let mut loglik = 0.0;
    for (i, target) in targets.iter().enumerate() {
        for m in 0..params.dims.horizon {
            loglik += if target.get(m) == 1 {
                log_activation(u[[i, m]])
            } else {
                log_activation_complement(u[[i, m]])
            };
        }
    }
    Ok(loglik)
}

/// Log-likelihood and its exact gradient for one example.
///
/// Per neuron and step the error signal is `e = y - g(u)`; the bias gradient
/// sums `e * rho(u)`, and the weight gradients correlate that coefficient
/// with the recent-past windows of the inputs (synaptic) and of the neuron's
/// own target train (feedback).
pub fn grad_conventional(
    params: &ModelParams,
    x: &EncodedExample,
    scheme: &DesiredOutputScheme,
) -> Result<(f64, GradientSet)> {
    let (targets, u) = targets_and_potentials(params, x, scheme)?;
    let (n_y, horizon) = (params.dims.n_y, params.dims.horizon);

    let mut loglik = 0.0;
    let mut coef = Array2::zeros((n_y, horizon));
    for (i, target) in targets.iter().enumerate() {
        for m in 0..horizon {
            let spiked = target.get(m) == 1;
            let ui = u[[i, m]];
            loglik += if spiked {
                log_activation(ui)
            } else {
                log_activation_complement(ui)
            };
            let error = f64::from(u8::from(spiked)) - activation(ui);
            coef[[i, m]] = error * rho(ui);
        }
    }

    let mut grads = GradientSet::zeros(params.dims);
    for i in 0..n_y {
        grads.bias[i] = coef.row(i).sum();
    }
    input_weight_grads(&params.basis.synaptic, x, &coef, &mut grads.weights);

    // feedback weights correlate the coefficients with the neuron's own
    // target spikes; target silence leaves them untouched
    let tau_fb = params.dims.tau_fb;
    let mut m_vec = Array1::zeros(tau_fb);
    for (i, target) in targets.iter().enumerate() {
        let spike_list = target.spike_indices();
        if spike_list.is_empty() {
            continue;
        }
        m_vec.fill(0.0);
        let coef_row = coef.row(i);
        for &src in &spike_list {
            let end = (src + 1 + tau_fb).min(horizon);
            for t_idx in (src + 1)..end {
                m_vec[t_idx - src - 1] += coef_row[t_idx];
            }
        }
        grads.feedback[i] = params.basis.feedback.t().dot(&m_vec);
    }

    Ok((loglik, grads))
}

/// One SGD pass over `data` in a seeded shuffled order, ascending the
/// per-example log-likelihood. Returns the epoch's mean log-likelihood.
pub fn sgd_epoch_conventional(
    params: &mut ModelParams,
    data: &[EncodedExample],
    eta: f64,
    scheme: &DesiredOutputScheme,
    rng: &mut impl Rng,
) -> Result<f64> {
    run_epoch(params, data, eta, rng, |p, x| grad_conventional(p, x, scheme))
}
