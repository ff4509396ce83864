//! Maximum-likelihood SGD training. Two criteria share the machinery here:
//! [`conventional`] fits assigned target trains for rate decoding, and
//! [`first_to_spike`] maximizes the probability that the correct neuron
//! fires first.

pub mod conventional;
pub mod first_to_spike;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::RawImage;
use crate::encoding::{encode_dataset, EncodedExample, EncodingMode};
use crate::error::{Error, Result};
use crate::glm::{ModelDims, ModelParams};
use crate::seeds::{rng_from, streams};

pub use conventional::{
    desired_output, grad_conventional, loglik_conventional, sgd_epoch_conventional,
    DesiredOutputScheme,
};
pub use first_to_spike::{
    first_spike_stats, grad_first_to_spike, loglik_first_to_spike, sgd_epoch_first_to_spike,
    FirstSpikeStats,
};

/// Log-likelihood gradients for every learnable parameter, laid out exactly
/// like [`ModelParams`] (per neuron: weight block, feedback weights, bias).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Array2<f64>>,
    pub feedback: Vec<Array1<f64>>,
    pub bias: Vec<f64>,
    dims: ModelDims,
}

impl GradientSet {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            weights: (0..dims.n_y)
                .map(|_| Array2::zeros((dims.n_x, dims.k_syn)))
                .collect(),
            feedback: (0..dims.n_y).map(|_| Array1::zeros(dims.k_fb)).collect(),
            bias: vec![0.0; dims.n_y],
            dims,
        }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn num_coords(&self) -> usize {
        self.dims.num_coords()
    }

    /// Flat coordinate access mirroring `ModelParams::coord`.
    pub fn coord(&self, idx: usize) -> f64 {
        let cpn = self.dims.coords_per_neuron();
        let neuron = idx / cpn;
        let rest = idx % cpn;
        let w_len = self.dims.n_x * self.dims.k_syn;
        if rest < w_len {
            self.weights[neuron][[rest / self.dims.k_syn, rest % self.dims.k_syn]]
        } else if rest - w_len < self.dims.k_fb {
            self.feedback[neuron][rest - w_len]
        } else {
            self.bias[neuron]
        }
    }

    pub fn set_coord(&mut self, idx: usize, value: f64) {
        let cpn = self.dims.coords_per_neuron();
        let neuron = idx / cpn;
        let rest = idx % cpn;
        let w_len = self.dims.n_x * self.dims.k_syn;
        if rest < w_len {
            self.weights[neuron][[rest / self.dims.k_syn, rest % self.dims.k_syn]] = value;
        } else if rest - w_len < self.dims.k_fb {
            self.feedback[neuron][rest - w_len] = value;
        } else {
            self.bias[neuron] = value;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.feedback.iter().all(|f| f.iter().all(|v| v.is_finite()))
            && self.bias.iter().all(|b| b.is_finite())
    }

    /// Gradient-ascent step: `params += eta * self`.
    pub fn apply_ascent(&self, params: &mut ModelParams, eta: f64) {
        for (neuron, (dw, (dv, db))) in params
            .neurons
            .iter_mut()
            .zip(self.weights.iter().zip(self.feedback.iter().zip(self.bias.iter())))
        {
            neuron.weights.scaled_add(eta, dw);
            neuron.feedback.scaled_add(eta, dv);
            neuron.bias += eta * db;
        }
    }
}

/// Per-neuron weight-block gradients from per-step coefficients:
/// row j of the result is `basis_syn' * m_j`, where `m_j[s]` correlates the
/// coefficient sequence of that neuron with input j's spikes at lag s+1.
/// Only inputs that actually spiked contribute, so work scales with the
/// spike count.
pub(crate) fn input_weight_grads(
    basis_syn: &Array2<f64>,
    x: &EncodedExample,
    coef: &Array2<f64>,
    out: &mut [Array2<f64>],
) {
    let tau = basis_syn.nrows();
    let t_max = x.horizon();
    let spikes: Vec<Vec<usize>> = x
        .inputs
        .iter()
        .map(crate::encoding::SpikeTrain::spike_indices)
        .collect();
    for (i, block) in out.iter_mut().enumerate() {
        let coef_row = coef.row(i);
        let mut m = Array1::zeros(tau);
        for (j, spike_list) in spikes.iter().enumerate() {
            if spike_list.is_empty() {
                continue;
            }
            m.fill(0.0);
            for &src in spike_list {
                let end = (src + 1 + tau).min(t_max);
                for t_idx in (src + 1)..end {
                    m[t_idx - src - 1] += coef_row[t_idx];
                }
            }
            block.row_mut(j).assign(&basis_syn.t().dot(&m));
        }
    }
}

/// Which objective an SGD run maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainerKind {
    Conventional,
    FirstToSpike,
}

/// Everything a full training run needs besides the model and the images.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub trainer: TrainerKind,
    pub epochs: usize,
    pub eta: f64,
    pub scheme: DesiredOutputScheme,
    pub encoding: EncodingMode,
    /// Base seed for epoch shuffles and per-epoch encodings.
    pub seed: u64,
}

/// One row of a training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loglik: f64,
}

/// Runs SGD for `cfg.epochs` epochs over `images`, re-encoding each epoch
/// when the mode is `Redraw`, and returns the training curve.
pub fn fit(
    params: &mut ModelParams,
    images: &[RawImage],
    cfg: &FitConfig,
) -> Result<Vec<EpochRecord>> {
    if cfg.epochs < 1 {
        return Err(Error::Domain("epochs must be at least 1".into()));
    }
    if images.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let horizon = params.dims.horizon;
    let frozen = match cfg.encoding {
        EncodingMode::Frozen => Some(encode_dataset(images, horizon, cfg.seed, 0)?),
        EncodingMode::Redraw => None,
    };

    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let redrawn;
        let data: &[EncodedExample] = match &frozen {
            Some(encoded) => encoded,
            None => {
                redrawn = encode_dataset(images, horizon, cfg.seed, epoch as u64)?;
                &redrawn
            }
        };
        let mut rng = rng_from(cfg.seed, &[streams::EPOCH, epoch as u64]);
        let mean_loglik = match cfg.trainer {
            TrainerKind::Conventional => {
                sgd_epoch_conventional(params, data, cfg.eta, &cfg.scheme, &mut rng)?
            }
            TrainerKind::FirstToSpike => {
                sgd_epoch_first_to_spike(params, data, cfg.eta, &mut rng)?
            }
        };
        curve.push(EpochRecord {
            epoch: epoch + 1,
            mean_loglik,
        });
    }
    Ok(curve)
}

/// Shared epoch driver: shuffled visiting order, one ascent step per
/// example, mean per-example log-likelihood returned.
pub(crate) fn run_epoch<F>(
    params: &mut ModelParams,
    data: &[EncodedExample],
    eta: f64,
    rng: &mut impl Rng,
    mut grad_fn: F,
) -> Result<f64>
where
    F: FnMut(&ModelParams, &EncodedExample) -> Result<(f64, GradientSet)>,
{
    if eta < 0.0 {
        return Err(Error::Domain(format!("learning rate {eta} is negative")));
    }
    if data.is_empty() {
        return Err(Error::Domain("epoch over an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);

    let mut total = 0.0;
    for &idx in &order {
        let (loglik, grads) = grad_fn(params, &data[idx])?;
        if !loglik.is_finite() || !grads.all_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at example {idx}: log-likelihood {loglik}"
            )));
        }
        grads.apply_ascent(params, eta);
        total += loglik;
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::BasisMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_coordinates_mirror_the_parameter_layout() {
        let dims = ModelDims {
            n_x: 3,
            n_y: 2,
            horizon: 4,
            tau_syn: 4,
            tau_fb: 4,
            k_syn: 2,
            k_fb: 1,
        };
        let mut grads = GradientSet::zeros(dims);
        assert_eq!(grads.num_coords(), dims.num_coords());
        for idx in 0..grads.num_coords() {
            grads.set_coord(idx, idx as f64);
        }
        for idx in 0..grads.num_coords() {
            assert_eq!(grads.coord(idx), idx as f64);
        }
        assert_eq!(grads.weights[0][[0, 1]], 1.0);
        assert_eq!(grads.bias[1], (grads.num_coords() - 1) as f64);
    }

    #[test]
    fn ascent_step_adds_scaled_gradients() {
        let dims = ModelDims {
            n_x: 1,
            n_y: 2,
            horizon: 2,
            tau_syn: 2,
            tau_fb: 2,
            k_syn: 2,
            k_fb: 2,
        };
        let basis = BasisMatrix::identity(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ModelParams::init_uniform(dims, basis, &mut rng).unwrap();
        let before = params.clone();
        let mut grads = GradientSet::zeros(dims);
        for idx in 0..grads.num_coords() {
            grads.set_coord(idx, 2.0);
        }
        grads.apply_ascent(&mut params, 0.25);
        for idx in 0..params.num_coords() {
            assert!((params.coord(idx) - before.coord(idx) - 0.5).abs() < 1e-15);
        }
    }
}
