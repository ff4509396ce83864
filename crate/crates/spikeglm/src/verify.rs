//! Independent oracles the tests and the `gradcheck` command lean on:
//! central-difference gradients and exhaustive enumeration of the
//! first-spike event probability. Both deliberately avoid the fast paths
//! used elsewhere so that agreement means two separate routes concur.

use ndarray::Array1;
use rand::Rng;

use crate::encoding::{EncodedExample, SpikeTrain};
use crate::error::{Error, Result};
use crate::glm::{
    log_activation, log_activation_complement, membrane_potential, window_at, BasisMatrix,
    ModelDims, ModelParams,
};
use crate::train::{
    grad_conventional, grad_first_to_spike, loglik_conventional, loglik_first_to_spike,
    DesiredOutputScheme, GradientSet,
};

/// Largest exponent allowed for the exhaustive enumeration.
pub const ENUMERATION_BUDGET_BITS: usize = 16;

/// Outcome of comparing an analytic gradient against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Human-readable name of the coordinate with the largest error.
    pub worst_coordinate: String,
    pub step: f64,
}

/// `|a - b|` scaled by the larger magnitude, floored so that a pair of
/// near-zero values does not blow the ratio up.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Central-difference gradient of `loss` at `params`, one coordinate at a
/// time.
pub fn finite_diff_gradient<F>(
    mut loss: F,
    params: &ModelParams,
    step: f64,
) -> Result<GradientSet>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(Error::Domain(format!("step {step} must be positive")));
    }
    let mut probe = params.clone();
    let mut grads = GradientSet::zeros(params.dims);
    for idx in 0..params.num_coords() {
        let center = params.coord(idx);
        probe.set_coord(idx, center + step);
        let plus = loss(&probe)?;
        probe.set_coord(idx, center - step);
        let minus = loss(&probe)?;
        probe.set_coord(idx, center);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is not finite while probing {}",
                params.dims.coord_name(idx)
            )));
        }
        grads.set_coord(idx, (plus - minus) / (2.0 * step));
    }
    Ok(grads)
}

fn compare(
    analytic: &GradientSet,
    numeric: &GradientSet,
    dims: &ModelDims,
    step: f64,
) -> GradCheckReport {
    let mut max_rel_error = 0.0;
    let mut worst = 0;
    for idx in 0..analytic.num_coords() {
        let err = relative_error(analytic.coord(idx), numeric.coord(idx));
        if err > max_rel_error {
            max_rel_error = err;
            worst = idx;
        }
    }
    GradCheckReport {
        max_rel_error,
        worst_coordinate: dims.coord_name(worst),
        step,
    }
}

/// Checks `grad_conventional` against finite differences on one example.
pub fn gradcheck_conventional(
    params: &ModelParams,
    x: &EncodedExample,
    scheme: &DesiredOutputScheme,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = grad_conventional(params, x, scheme)?;
    let numeric = finite_diff_gradient(|p| loglik_conventional(p, x, scheme), params, step)?;
    Ok(compare(&analytic, &numeric, &params.dims, step))
}

/// Checks `grad_first_to_spike` against finite differences on one example.
pub fn gradcheck_first_to_spike(
    params: &ModelParams,
    x: &EncodedExample,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = grad_first_to_spike(params, x)?;
    let numeric = finite_diff_gradient(|p| loglik_first_to_spike(p, x), params, step)?;
    Ok(compare(&analytic, &numeric, &params.dims, step))
}

/// Probability that neuron `class` wins the first-spike race at each step,
/// found by summing every joint output pattern the event contains.
///
/// Pattern probabilities are chained with zero feedback, which is exact
/// here: every pattern in the event is silent before the winning step, and
/// later steps marginalize out. Potentials go through the window-based
/// reference path, not the scatter path the trainers use, and the sum is
/// Neumaier-compensated because most of the 2^(N_Y*T) terms are tiny.
pub fn enumerate_first_spike_probability(
    params: &ModelParams,
    x: &EncodedExample,
    class: usize,
) -> Result<Vec<f64>> {
    let dims = params.dims;
    if x.inputs.len() != dims.n_x || x.horizon() != dims.horizon {
        return Err(Error::Shape(
            "example does not match the model dimensions".into(),
        ));
    }
    if class >= dims.n_y {
        return Err(Error::Shape(format!(
            "class {} out of range for {} neurons",
            class, dims.n_y
        )));
    }
    let bits = dims.n_y * dims.horizon;
    if bits > ENUMERATION_BUDGET_BITS {
        return Err(Error::Capacity(format!(
            "enumeration needs 2^{bits} patterns, budget is 2^{ENUMERATION_BUDGET_BITS}"
        )));
    }

    let (n_y, horizon) = (dims.n_y, dims.horizon);
    let zero_fb = Array1::zeros(dims.tau_fb);
    let mut log_fire = vec![0.0; n_y * horizon];
    let mut log_quiet = vec![0.0; n_y * horizon];
    for m in 0..horizon {
        let x_windows: Vec<Array1<f64>> = x
            .inputs
            .iter()
            .map(|train| window_at(train, m + 1, dims.tau_syn))
            .collect();
        for i in 0..n_y {
            let u = membrane_potential(&params.neurons[i], &params.basis, &x_windows, &zero_fb)?;
            log_fire[i * horizon + m] = log_activation(u);
            log_quiet[i * horizon + m] = log_activation_complement(u);
        }
    }

    let mut mass = vec![0.0f64; horizon];
    let mut comp = vec![0.0f64; horizon];
    for pattern in 0u32..(1u32 << bits) {
        // first step at which any neuron fires, and who fires there
        let mut first_step = None;
        for m in 0..horizon {
            let spikers: Vec<usize> = (0..n_y)
                .filter(|i| pattern >> (i * horizon + m) & 1 == 1)
                .collect();
            if !spikers.is_empty() {
                first_step = Some((m, spikers));
                break;
            }
        }
        let Some((m0, spikers)) = first_step else {
            continue;
        };
        if spikers != [class] {
            continue;
        }

        let mut log_prob = 0.0;
        for i in 0..n_y {
            for m in 0..horizon {
                log_prob += if pattern >> (i * horizon + m) & 1 == 1 {
                    log_fire[i * horizon + m]
                } else {
                    log_quiet[i * horizon + m]
                };
            }
        }
        let term = log_prob.exp();

        // Neumaier update keeps the low-order bits of tiny terms
        let sum = mass[m0] + term;
        comp[m0] += if mass[m0].abs() >= term.abs() {
            (mass[m0] - sum) + term
        } else {
            (term - sum) + mass[m0]
        };
        mass[m0] = sum;
    }
    Ok(mass.iter().zip(&comp).map(|(s, c)| s + c).collect())
}

/// Size caps for randomly drawn test instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceBounds {
    pub max_n_x: usize,
    pub max_n_y: usize,
    pub max_horizon: usize,
    pub max_k: usize,
}

impl Default for InstanceBounds {
    fn default() -> Self {
        Self {
            max_n_x: 4,
            max_n_y: 3,
            max_horizon: 4,
            max_k: 3,
        }
    }
}

/// Draws a random small model (uniform parameters, identity or
/// raised-cosine basis) and a random encoded example to feed it.
pub fn random_instance(
    rng: &mut impl Rng,
    bounds: &InstanceBounds,
) -> Result<(ModelParams, EncodedExample)> {
    let n_x = rng.gen_range(1..=bounds.max_n_x);
    let n_y = rng.gen_range(2..=bounds.max_n_y.max(2));
    let horizon = rng.gen_range(1..=bounds.max_horizon);

    // identity needs K = tau, so it is only on the menu when the horizon
    // fits the K cap
    let use_identity = horizon <= bounds.max_k && rng.gen::<f64>() < 0.5;
    let (dims, basis) = if use_identity {
        (
            ModelDims::with_full_windows(n_x, n_y, horizon, horizon, horizon),
            BasisMatrix::identity(horizon, horizon)?,
        )
    } else {
        let k_cap = bounds.max_k.min(horizon);
        let k_syn = rng.gen_range(1..=k_cap);
        let k_fb = rng.gen_range(1..=k_cap);
        (
            ModelDims::with_full_windows(n_x, n_y, horizon, k_syn, k_fb),
            BasisMatrix::raised_cosine(k_syn, horizon, k_fb, horizon, 7500.0, 1.0)?,
        )
    };
    let params = ModelParams::init_uniform(dims, basis, rng)?;

    let trains: Vec<SpikeTrain> = (0..n_x)
        .map(|_| {
            SpikeTrain::new((0..horizon).map(|_| u8::from(rng.gen::<f64>() < 0.3)).collect())
                .expect("binary by construction")
        })
        .collect();
    let label = rng.gen_range(0..n_y);
    let x = EncodedExample::new(trains, label)?;
    Ok((params, x))
}
