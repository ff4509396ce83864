//! Training for first-to-spike decoding: the objective is the probability
//! that the correct neuron fires strictly before every other neuron, summed
//! over all steps at which that can happen. Feedback plays no role because
//! the race ends at the first spike, so potentials are computed with all
//! output histories clamped to zero.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::encoding::EncodedExample;
use crate::error::{Error, Result};
use crate::glm::{
    activation, log_activation, log_activation_complement, potentials_zero_feedback, rho,
    KernelSet, ModelParams,
};
use crate::train::{input_weight_grads, run_epoch, GradientSet};

/// Per-step posterior of the first-spike event for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstSpikeStats {
    /// `log_p[m]`: log-probability that the correct neuron fires first,
    /// at step m+1 exactly, with every other neuron still silent.
    pub log_p: Array1<f64>,
    /// Posterior weight of each step given that the event happened;
    /// sums to one.
    pub q: Array1<f64>,
    /// Inclusive suffix sums of `q`; `h[0] = 1` and `h` never increases.
    pub h: Array1<f64>,
    /// Log of the total event probability.
    pub loglik: f64,
}

fn check_example(params: &ModelParams, x: &EncodedExample, class: usize) -> Result<()> {
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
    if class >= params.dims.n_y {
        return Err(Error::Shape(format!(
            "class {} out of range for {} neurons",
            class, params.dims.n_y
        )));
    }
    Ok(())
}

fn stats_from_potentials(u: &Array2<f64>, class: usize) -> Result<FirstSpikeStats> {
    let (n_y, horizon) = u.dim();

    // log p_m = sum_{i != c} L_i(m) + L_c(m-1) + log g(u_{c,m}), where
    // L_i(m) is the running log-probability that neuron i stayed silent
    // through step m+1. One forward pass keeps all the L_i current.
    let mut silent = vec![0.0; n_y];
    let mut log_p = Array1::zeros(horizon);
    for m in 0..horizon {
        let class_silent_before = silent[class];
        for (i, acc) in silent.iter_mut().enumerate() {
            *acc += log_activation_complement(u[[i, m]]);
        }
        let mut lp = class_silent_before + log_activation(u[[class, m]]);
        for (i, acc) in silent.iter().enumerate() {
            if i != class {
                lp += *acc;
            }
        }
        if !lp.is_finite() {
            return Err(Error::Numeric(format!(
                "first-spike log-probability is not finite at step {}",
                m + 1
            )));
        }
        log_p[m] = lp;
    }

    // log-sum-exp with a max shift keeps the largest term at exp(0)
    let shift = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut scaled = Array1::zeros(horizon);
    let mut total = 0.0;
    for m in 0..horizon {
        scaled[m] = (log_p[m] - shift).exp();
        total += scaled[m];
    }
    let loglik = shift + total.ln();
    if !loglik.is_finite() {
        return Err(Error::Numeric(format!(
            "first-spike log-likelihood is not finite ({loglik})"
        )));
    }

    let q = scaled / total;
    let mut h = Array1::zeros(horizon);
    h[horizon - 1] = q[horizon - 1];
    for m in (0..horizon - 1).rev() {
        h[m] = h[m + 1] + q[m];
    }

    Ok(FirstSpikeStats { log_p, q, h, loglik })
}

fn stats_and_potentials(
    params: &ModelParams,
    x: &EncodedExample,
    class: usize,
) -> Result<(FirstSpikeStats, Array2<f64>)> {
    check_example(params, x, class)?;
    let kernels = KernelSet::from_params(params);
    let u = potentials_zero_feedback(&kernels, x)?;
    let stats = stats_from_potentials(&u, class)?;
    Ok((stats, u))
}

/// First-spike event statistics for `x` under the hypothesis that `class`
/// wins the race.
pub fn first_spike_stats(
    params: &ModelParams,
    x: &EncodedExample,
    class: usize,
) -> Result<FirstSpikeStats> {
    Ok(stats_and_potentials(params, x, class)?.0)
}

/// Log-probability that the labeled neuron fires first.
pub fn loglik_first_to_spike(params: &ModelParams, x: &EncodedExample) -> Result<f64> {
    Ok(first_spike_stats(params, x, x.label)?.loglik)
}

/// Log-likelihood and its exact gradient for one example.
///
/// The per-step coefficient is `q_m - h_m * g(u)` for the labeled neuron
/// (shrinking the posterior-weighted steps it should fire at) and
/// `-h_m * g(u)` for the rest (suppressing them while the race is open).
/// Feedback weights get zero gradient: the objective never sees output
/// spikes.
pub fn grad_first_to_spike(
    params: &ModelParams,
    x: &EncodedExample,
) -> Result<(f64, GradientSet)> {
    let class = x.label;
    let (stats, u) = stats_and_potentials(params, x, class)?;
    let (n_y, horizon) = (params.dims.n_y, params.dims.horizon);

    let mut coef = Array2::zeros((n_y, horizon));
    for m in 0..horizon {
        for i in 0..n_y {
            let ui = u[[i, m]];
            let suppression = -stats.h[m] * activation(ui);
            let raw = if i == class {
                stats.q[m] + suppression
            } else {
                suppression
            };
            coef[[i, m]] = raw * rho(ui);
        }
    }

    let mut grads = GradientSet::zeros(params.dims);
    for i in 0..n_y {
        grads.bias[i] = coef.row(i).sum();
    }
    input_weight_grads(&params.basis.synaptic, x, &coef, &mut grads.weights);
    Ok((stats.loglik, grads))
}

/// One SGD pass over `data` in a seeded shuffled order, ascending the
/// first-spike log-likelihood. Returns the epoch's mean log-likelihood.
pub fn sgd_epoch_first_to_spike(
    params: &mut ModelParams,
    data: &[EncodedExample],
    eta: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    run_epoch(params, data, eta, rng, grad_first_to_spike)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::SpikeTrain;
    use crate::glm::{BasisMatrix, ModelDims};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_model(n_x: usize, n_y: usize, horizon: usize) -> ModelParams {
        let dims = ModelDims::with_full_windows(n_x, n_y, horizon, horizon, horizon);
        ModelParams::zeros(dims, BasisMatrix::identity(horizon, horizon).unwrap()).unwrap()
    }

    fn silent_example(n_x: usize, horizon: usize, label: usize) -> EncodedExample {
        EncodedExample::new(vec![SpikeTrain::zeros(horizon); n_x], label).unwrap()
    }

    #[test]
    fn two_neuron_two_step_statistics_match_hand_computation() {
        // all potentials zero: every spike probability is 1/2, so
        // p_1 = 1/4 (c fires, the other stays quiet) and p_2 = 1/16
        // (three quiet slots, then c fires)
        let params = zero_model(1, 2, 2);
        let x = silent_example(1, 2, 0);
        let stats = first_spike_stats(&params, &x, 0).unwrap();
        assert_relative_eq!(stats.log_p[0], 0.25f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(stats.log_p[1], 0.0625f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(stats.loglik, 0.3125f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(stats.q[0], 0.8, max_relative = 1e-13);
        assert_relative_eq!(stats.q[1], 0.2, max_relative = 1e-13);
        assert_relative_eq!(stats.h[0], 1.0, max_relative = 1e-13);
        assert_relative_eq!(stats.h[1], 0.2, max_relative = 1e-13);
    }

    #[test]
    fn posterior_sums_to_one_and_suffix_identities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let dims = ModelDims::with_full_windows(3, 3, 5, 5, 5);
            let params = ModelParams::init_uniform(
                dims,
                BasisMatrix::identity(5, 5).unwrap(),
                &mut rng,
            )
            .unwrap();
            let x = EncodedExample::new(
                (0..3)
                    .map(|_| {
                        SpikeTrain::new(
                            (0..5).map(|_| u8::from(rng.gen::<f64>() < 0.4)).collect(),
                        )
                        .unwrap()
                    })
                    .collect(),
                trial % 3,
            )
            .unwrap();
            let stats = first_spike_stats(&params, &x, x.label).unwrap();
            assert!((stats.q.sum() - 1.0).abs() <= 1e-12);
            assert!((stats.h[0] - 1.0).abs() <= 1e-12);
            for m in 0..5 {
                let tail: f64 = (m..5).map(|k| stats.q[k]).sum();
                assert!((stats.h[m] - tail).abs() <= 1e-12);
                if m > 0 {
                    assert!(stats.h[m] <= stats.h[m - 1]);
                }
            }
        }
    }

    #[test]
    fn shifting_by_the_minimum_gives_the_same_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dims = ModelDims::with_full_windows(2, 3, 6, 6, 6);
        let params =
            ModelParams::init_uniform(dims, BasisMatrix::identity(6, 6).unwrap(), &mut rng)
                .unwrap();
        let x = EncodedExample::new(
            vec![
                SpikeTrain::new(vec![1, 0, 0, 1, 1, 0]).unwrap(),
                SpikeTrain::new(vec![0, 1, 1, 0, 0, 1]).unwrap(),
            ],
            2,
        )
        .unwrap();
        let stats = first_spike_stats(&params, &x, 2).unwrap();
        let min_shift = stats.log_p.iter().copied().fold(f64::INFINITY, f64::min);
        let scaled: Vec<f64> = stats.log_p.iter().map(|lp| (lp - min_shift).exp()).collect();
        let total: f64 = scaled.iter().sum();
        for m in 0..6 {
            assert!((stats.q[m] - scaled[m] / total).abs() <= 1e-12);
        }
        assert_relative_eq!(stats.loglik, min_shift + total.ln(), max_relative = 1e-12);
    }

    #[test]
    fn saturated_class_neuron_wins_immediately() {
        let mut params = zero_model(1, 2, 4);
        params.neurons[0].bias = 40.0;
        params.neurons[1].bias = -40.0;
        let x = silent_example(1, 4, 0);
        let stats = first_spike_stats(&params, &x, 0).unwrap();
        assert!(stats.q[0] > 1.0 - 1e-12);
        assert!(stats.loglik.abs() < 1e-12);
    }

    #[test]
    fn single_step_bias_gradient_is_half_either_way() {
        let params = zero_model(2, 3, 1);
        let x = silent_example(2, 1, 1);
        let (loglik, grads) = grad_first_to_spike(&params, &x).unwrap();
        assert_relative_eq!(loglik, 0.125f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(grads.bias[0], -0.5, max_relative = 1e-14);
        assert_relative_eq!(grads.bias[1], 0.5, max_relative = 1e-14);
        assert_relative_eq!(grads.bias[2], -0.5, max_relative = 1e-14);
    }

    #[test]
    fn silent_inputs_leave_weight_and_feedback_gradients_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = ModelDims::with_full_windows(3, 2, 4, 4, 4);
        let params =
            ModelParams::init_uniform(dims, BasisMatrix::identity(4, 4).unwrap(), &mut rng)
                .unwrap();
        let x = silent_example(3, 4, 1);
        let (_, grads) = grad_first_to_spike(&params, &x).unwrap();
        for block in &grads.weights {
            assert!(block.iter().all(|v| *v == 0.0));
        }
        for fb in &grads.feedback {
            assert!(fb.iter().all(|v| *v == 0.0));
        }
        assert!(grads.bias.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn feedback_gradients_are_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = ModelDims::with_full_windows(2, 2, 5, 5, 5);
        let params =
            ModelParams::init_uniform(dims, BasisMatrix::identity(5, 5).unwrap(), &mut rng)
                .unwrap();
        let x = EncodedExample::new(
            vec![
                SpikeTrain::new(vec![1, 1, 0, 1, 0]).unwrap(),
                SpikeTrain::new(vec![0, 0, 1, 1, 1]).unwrap(),
            ],
            0,
        )
        .unwrap();
        let (_, grads) = grad_first_to_spike(&params, &x).unwrap();
        for fb in &grads.feedback {
            assert!(fb.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dims = ModelDims::with_full_windows(2, 2, 3, 3, 3);
        let params =
            ModelParams::init_uniform(dims, BasisMatrix::identity(3, 3).unwrap(), &mut rng)
                .unwrap();
        let x = EncodedExample::new(
            vec![
                SpikeTrain::new(vec![1, 0, 1]).unwrap(),
                SpikeTrain::new(vec![0, 1, 0]).unwrap(),
            ],
            1,
        )
        .unwrap();
        let (_, grads) = grad_first_to_spike(&params, &x).unwrap();
        let step = 1e-5;
        for idx in 0..params.num_coords() {
            let mut plus = params.clone();
            plus.set_coord(idx, plus.coord(idx) + step);
            let mut minus = params.clone();
            minus.set_coord(idx, minus.coord(idx) - step);
            let numeric = (loglik_first_to_spike(&plus, &x).unwrap()
                - loglik_first_to_spike(&minus, &x).unwrap())
                / (2.0 * step);
            let analytic = grads.coord(idx);
            let denom = numeric.abs().max(analytic.abs()).max(1e-3);
            assert!(
                ((numeric - analytic) / denom).abs() <= 1e-6,
                "coordinate {idx}: analytic {analytic}, numeric {numeric}"
            );
        }
    }

    #[test]
    fn statistics_are_bitwise_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let dims = ModelDims::with_full_windows(2, 3, 4, 4, 4);
        let params =
            ModelParams::init_uniform(dims, BasisMatrix::identity(4, 4).unwrap(), &mut rng)
                .unwrap();
        let x = EncodedExample::new(
            vec![
                SpikeTrain::new(vec![1, 0, 0, 1]).unwrap(),
                SpikeTrain::new(vec![0, 1, 1, 0]).unwrap(),
            ],
            2,
        )
        .unwrap();
        let a = first_spike_stats(&params, &x, 2).unwrap();
        let b = first_spike_stats(&params, &x, 2).unwrap();
        assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
        assert_eq!(a.log_p, b.log_p);
        assert_eq!(a.q, b.q);
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn training_separates_a_synthetic_task() {
        // class 0 drives inputs 0..2 hot, class 1 drives inputs 2..4
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = Vec::new();
        for idx in 0..40 {
            let label = idx % 2;
            let trains: Vec<SpikeTrain> = (0..4)
                .map(|j| {
                    let hot = if label == 0 { j < 2 } else { j >= 2 };
                    let p = if hot { 0.8 } else { 0.05 };
                    SpikeTrain::new((0..4).map(|_| u8::from(rng.gen::<f64>() < p)).collect())
                        .unwrap()
                })
                .collect();
            data.push(EncodedExample::new(trains, label).unwrap());
        }

        let dims = ModelDims::with_full_windows(4, 2, 4, 4, 4);
        let basis = BasisMatrix::raised_cosine(4, 4, 4, 4, 7500.0, 1.0).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ModelParams::init_uniform(dims, basis, &mut init_rng).unwrap();

        let mut epoch_rng = ChaCha8Rng::seed_from_u64(7);
        let first = sgd_epoch_first_to_spike(&mut params, &data, 0.1, &mut epoch_rng).unwrap();
        let mut last = first;
        for _ in 1..100 {
            last = sgd_epoch_first_to_spike(&mut params, &data, 0.1, &mut epoch_rng).unwrap();
        }
        assert!(last > first, "mean log-likelihood fell from {first} to {last}");

        // likelihood-ratio read-out: the true class should win on every example
        for x in &data {
            let own = first_spike_stats(&params, x, x.label).unwrap().loglik;
            let other = first_spike_stats(&params, x, 1 - x.label).unwrap().loglik;
            assert!(own > other);
        }
    }
}
