//! The GLM point-process neuron: basis construction, kernels, membrane
//! potentials, sigmoid activation, and per-train log-likelihood.
//!
//! A neuron's firing probability at step t is `sigmoid(u)`, where the
//! membrane potential `u` linearly combines filtered recent input spikes,
//! filtered recent own spikes, and a bias. Filters (kernels) are expansions
//! over a small fixed basis: `alpha = A * w`, `beta = B * v`.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedExample, SpikeTrain};
use crate::error::{Error, Result};

/// Default log-stretch of the raised-cosine lag axis.
pub const LOG_STRETCH_DEFAULT: f64 = 7500.0;
/// Default additive offset inside the logarithm.
pub const LOG_OFFSET_DEFAULT: f64 = 1.0;

/// Columns whose peak on the integer lag grid falls below this are treated
/// as having no support (the bump lies entirely between lags).
const MIN_COLUMN_SUPPORT: f64 = 1e-9;

// --- activation -----------------------------------------------------------

/// Numerically stable sigmoid.
pub fn activation(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// 1 - sigmoid(u), computed as sigmoid(-u) so large positive `u` does not
/// cancel catastrophically.
pub fn activation_complement(u: f64) -> f64 {
    activation(-u)
}

/// log(sigmoid(u)) without overflow for any finite `u`.
pub fn log_activation(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// log(1 - sigmoid(u)).
pub fn log_activation_complement(u: f64) -> f64 {
    log_activation(-u)
}

/// Link ratio g'(u) / (g(u) * (1 - g(u))). For the sigmoid this is
/// identically 1; it is kept as a named factor so the gradient code states
/// the full update rule.
pub fn rho(_u: f64) -> f64 {
    1.0
}

// --- basis construction ----------------------------------------------------

/// Log-stretched raised-cosine bumps evaluated on the integer lag grid
/// 1..=tau.
///
/// Lags map to a stretched axis phi(t) = a*ln(t + c); K centers are evenly
/// spaced over [phi(1), phi(tau)] with spacing delta, and column k holds
/// 0.5*cos(clamp((phi(t) - center_k) * pi / (2*delta), -pi, pi)) + 0.5, so
/// each bump spans two center spacings and the family tiles the window with
/// fine resolution at short lags and coarse resolution at long ones.
pub fn raised_cosine_basis(k: usize, tau: usize, a: f64, c: f64) -> Result<Array2<f64>> {
    if k < 1 || tau < 1 {
        return Err(Error::Domain(format!(
            "raised cosine basis needs k >= 1 and tau >= 1, got k={k}, tau={tau}"
        )));
    }
    if !(a > 0.0) || !(c > -1.0) {
        return Err(Error::Domain(format!(
            "raised cosine basis needs a > 0 and c > -1, got a={a}, c={c}"
        )));
    }
    let phi = |t: f64| a * (t + c).ln();
    let lo = phi(1.0);
    let hi = phi(tau as f64);
    let (centers, delta) = if k == 1 {
        let delta = if hi > lo { hi - lo } else { 1.0 };
        (vec![lo], delta)
    } else {
        if hi <= lo {
            return Err(Error::Domain(format!(
                "cannot place {k} distinct centers on a window of {tau} lag(s)"
            )));
        }
        let delta = (hi - lo) / (k as f64 - 1.0);
        let centers = (0..k).map(|idx| lo + idx as f64 * delta).collect();
        (centers, delta)
    };

    let mut basis = Array2::zeros((tau, k));
    for (col, &center) in centers.iter().enumerate() {
        for row in 0..tau {
            let arg = (phi((row + 1) as f64) - center) * std::f64::consts::PI / (2.0 * delta);
            let arg = arg.clamp(-std::f64::consts::PI, std::f64::consts::PI);
            basis[[row, col]] = 0.5 * arg.cos() + 0.5;
        }
        let peak = (0..tau).map(|row| basis[[row, col]]).fold(0.0, f64::max);
        if peak <= MIN_COLUMN_SUPPORT {
            return Err(Error::Domain(format!(
                "basis column {col} has no support on the lag grid; \
                 reduce k or increase tau"
            )));
        }
    }
    Ok(basis)
}

/// The tau x tau identity: column k is the indicator of lag k+1, which makes
/// kernel weights and kernel values coincide (the unstructured model).
pub fn identity_basis(tau: usize) -> Array2<f64> {
    Array2::eye(tau)
}

/// Kernel vector from basis expansion coefficients: `basis * weights`.
pub fn kernel_from_weights(basis: &Array2<f64>, weights: &Array1<f64>) -> Result<Array1<f64>> {
    if basis.ncols() != weights.len() {
        return Err(Error::Shape(format!(
            "basis has {} columns but weight vector has {} entries",
            basis.ncols(),
            weights.len()
        )));
    }
    Ok(basis.dot(weights))
}

/// The shared basis pair: `synaptic` filters input spikes (tau_syn x k_syn),
/// `feedback` filters a neuron's own spikes (tau_fb x k_fb). Row s holds the
/// value applied at lag s+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMatrix {
    pub synaptic: Array2<f64>,
    pub feedback: Array2<f64>,
}

impl BasisMatrix {
    pub fn new(synaptic: Array2<f64>, feedback: Array2<f64>) -> Result<Self> {
        for (name, matrix) in [("synaptic", &synaptic), ("feedback", &feedback)] {
            if matrix.nrows() < 1 || matrix.ncols() < 1 {
                return Err(Error::Shape(format!("{name} basis is empty")));
            }
            if matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("{name} basis has non-finite entries")));
            }
            for col in 0..matrix.ncols() {
                if (0..matrix.nrows()).all(|row| matrix[[row, col]] == 0.0) {
                    return Err(Error::Domain(format!(
                        "{name} basis column {col} is identically zero"
                    )));
                }
            }
        }
        Ok(Self { synaptic, feedback })
    }

    pub fn raised_cosine(
        k_syn: usize,
        tau_syn: usize,
        k_fb: usize,
        tau_fb: usize,
        a: f64,
        c: f64,
    ) -> Result<Self> {
        Self::new(
            raised_cosine_basis(k_syn, tau_syn, a, c)?,
            raised_cosine_basis(k_fb, tau_fb, a, c)?,
        )
    }

    pub fn identity(tau_syn: usize, tau_fb: usize) -> Result<Self> {
        Self::new(identity_basis(tau_syn), identity_basis(tau_fb))
    }
}

// --- parameters ------------------------------------------------------------

/// All dimensional hyperparameters of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Input neurons (one per pixel for image tasks).
    pub n_x: usize,
    /// Output neurons (one per class).
    pub n_y: usize,
    /// Discrete-time steps per example.
    pub horizon: usize,
    /// Synaptic kernel window length.
    pub tau_syn: usize,
    /// Feedback kernel window length.
    pub tau_fb: usize,
    /// Synaptic basis functions.
    pub k_syn: usize,
    /// Feedback basis functions.
    pub k_fb: usize,
}

impl ModelDims {
    /// Window lengths default to the horizon when not chosen explicitly.
    pub fn with_full_windows(n_x: usize, n_y: usize, horizon: usize, k_syn: usize, k_fb: usize) -> Self {
        Self {
            n_x,
            n_y,
            horizon,
            tau_syn: horizon,
            tau_fb: horizon,
            k_syn,
            k_fb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_y < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 output neurons, got {}",
                self.n_y
            )));
        }
        for (name, v) in [
            ("n_x", self.n_x),
            ("horizon", self.horizon),
            ("tau_syn", self.tau_syn),
            ("tau_fb", self.tau_fb),
            ("k_syn", self.k_syn),
            ("k_fb", self.k_fb),
        ] {
            if v < 1 {
                return Err(Error::Domain(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Free parameters per output neuron: an n_x x k_syn weight block, a
    /// k_fb feedback weight vector, and a bias.
    pub fn coords_per_neuron(&self) -> usize {
        self.n_x * self.k_syn + self.k_fb + 1
    }

    pub fn num_coords(&self) -> usize {
        self.n_y * self.coords_per_neuron()
    }

    /// Human-readable name of a flat parameter coordinate. The flat order is,
    /// per neuron: weight block row-major, then feedback weights, then bias.
    pub fn coord_name(&self, idx: usize) -> String {
        let cpn = self.coords_per_neuron();
        let neuron = idx / cpn;
        let rest = idx % cpn;
        let w_len = self.n_x * self.k_syn;
        if rest < w_len {
            format!(
                "neuron {neuron} w[input {}, basis {}]",
                rest / self.k_syn,
                rest % self.k_syn
            )
        } else if rest - w_len < self.k_fb {
            format!("neuron {neuron} v[basis {}]", rest - w_len)
        } else {
            format!("neuron {neuron} bias")
        }
    }
}

/// Learnable parameters of one output neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Synaptic expansion weights, one row per input neuron (n_x x k_syn).
    pub weights: Array2<f64>,
    /// Feedback expansion weights (k_fb).
    pub feedback: Array1<f64>,
    /// Bias.
    pub bias: f64,
}

/// A complete model: shared basis, per-neuron parameters, and dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub basis: BasisMatrix,
    pub neurons: Vec<NeuronParams>,
}

impl ModelParams {
    pub fn new(dims: ModelDims, basis: BasisMatrix, neurons: Vec<NeuronParams>) -> Result<Self> {
        let params = Self { dims, basis, neurons };
        params.validate()?;
        Ok(params)
    }

    /// All weights and biases zero.
    pub fn zeros(dims: ModelDims, basis: BasisMatrix) -> Result<Self> {
        let neurons = (0..dims.n_y)
            .map(|_| NeuronParams {
                weights: Array2::zeros((dims.n_x, dims.k_syn)),
                feedback: Array1::zeros(dims.k_fb),
                bias: 0.0,
            })
            .collect();
        Self::new(dims, basis, neurons)
    }

    /// Every parameter drawn independently and uniformly from [-1, 1).
    /// Draw order is fixed (per neuron: weight block row-major, feedback,
    /// bias) so a seeded generator reproduces the initialization.
    pub fn init_uniform(dims: ModelDims, basis: BasisMatrix, rng: &mut impl Rng) -> Result<Self> {
        let mut params = Self::zeros(dims, basis)?;
        for neuron in &mut params.neurons {
            for w in neuron.weights.iter_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
            for v in neuron.feedback.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            neuron.bias = rng.gen_range(-1.0..1.0);
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let d = &self.dims;
        if self.basis.synaptic.nrows() != d.tau_syn || self.basis.synaptic.ncols() != d.k_syn {
            return Err(Error::Consistency(format!(
                "synaptic basis is {}x{}, dims say {}x{}",
                self.basis.synaptic.nrows(),
                self.basis.synaptic.ncols(),
                d.tau_syn,
                d.k_syn
            )));
        }
        if self.basis.feedback.nrows() != d.tau_fb || self.basis.feedback.ncols() != d.k_fb {
            return Err(Error::Consistency(format!(
                "feedback basis is {}x{}, dims say {}x{}",
                self.basis.feedback.nrows(),
                self.basis.feedback.ncols(),
                d.tau_fb,
                d.k_fb
            )));
        }
        if self.neurons.len() != d.n_y {
            return Err(Error::Consistency(format!(
                "{} neurons, dims say {}",
                self.neurons.len(),
                d.n_y
            )));
        }
        for (i, neuron) in self.neurons.iter().enumerate() {
            if neuron.weights.nrows() != d.n_x || neuron.weights.ncols() != d.k_syn {
                return Err(Error::Consistency(format!(
                    "neuron {i}: weight block is {}x{}, dims say {}x{}",
                    neuron.weights.nrows(),
                    neuron.weights.ncols(),
                    d.n_x,
                    d.k_syn
                )));
            }
            if neuron.feedback.len() != d.k_fb {
                return Err(Error::Consistency(format!(
                    "neuron {i}: {} feedback weights, dims say {}",
                    neuron.feedback.len(),
                    d.k_fb
                )));
            }
            let finite = neuron.weights.iter().all(|v| v.is_finite())
                && neuron.feedback.iter().all(|v| v.is_finite())
                && neuron.bias.is_finite();
            if !finite {
                return Err(Error::Numeric(format!("neuron {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn num_coords(&self) -> usize {
        self.dims.num_coords()
    }

    /// Reads the flat coordinate `idx` (see `ModelDims::coord_name` for the
    /// layout).
    pub fn coord(&self, idx: usize) -> f64 {
        let cpn = self.dims.coords_per_neuron();
        let neuron = &self.neurons[idx / cpn];
        let rest = idx % cpn;
        let w_len = self.dims.n_x * self.dims.k_syn;
        if rest < w_len {
            neuron.weights[[rest / self.dims.k_syn, rest % self.dims.k_syn]]
        } else if rest - w_len < self.dims.k_fb {
            neuron.feedback[rest - w_len]
        } else {
            neuron.bias
        }
    }

    pub fn set_coord(&mut self, idx: usize, value: f64) {
        let cpn = self.dims.coords_per_neuron();
        let (n_x, k_syn, k_fb) = (self.dims.n_x, self.dims.k_syn, self.dims.k_fb);
        let neuron = &mut self.neurons[idx / cpn];
        let rest = idx % cpn;
        let w_len = n_x * k_syn;
        if rest < w_len {
            neuron.weights[[rest / k_syn, rest % k_syn]] = value;
        } else if rest - w_len < k_fb {
            neuron.feedback[rest - w_len] = value;
        } else {
            neuron.bias = value;
        }
    }
}

// --- kernels and potentials --------------------------------------------------

/// Kernels expanded from basis weights, ready for simulation.
/// `synaptic[i]` is n_x x tau_syn (row j holds the filter input j applies to
/// neuron i, entry s acting at lag s+1); `feedback[i]` has length tau_fb.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub dims: ModelDims,
    pub synaptic: Vec<Array2<f64>>,
    pub feedback: Vec<Array1<f64>>,
    pub bias: Vec<f64>,
}

impl KernelSet {
    pub fn from_params(params: &ModelParams) -> Self {
        let synaptic = params
            .neurons
            .iter()
            .map(|n| n.weights.dot(&params.basis.synaptic.t()))
            .collect();
        let feedback = params
            .neurons
            .iter()
            .map(|n| params.basis.feedback.dot(&n.feedback))
            .collect();
        let bias = params.neurons.iter().map(|n| n.bias).collect();
        KernelSet {
            dims: params.dims,
            synaptic,
            feedback,
            bias,
        }
    }
}

/// The recent-past slice of a train feeding the potential at step `t`
/// (1-based), most recent sample first: entry s is the sample at time t-1-s,
/// zero for times before the example starts.
pub fn window_at(train: &SpikeTrain, t: usize, tau: usize) -> Array1<f64> {
    let mut window = Array1::zeros(tau);
    for s in 0..tau {
        if t >= s + 2 {
            let src = t - 2 - s;
            if src < train.len() {
                window[s] = f64::from(train.get(src));
            }
        }
    }
    window
}

/// Membrane potential of one neuron from explicit recent-past windows
/// (most recent sample first, as produced by `window_at`).
///
/// Reference entry point: expands the basis on the fly, so one call costs
/// O(n_x * tau_syn * k_syn). Simulation paths precompute a `KernelSet` and
/// add only nonzero window entries instead.
pub fn membrane_potential(
    neuron: &NeuronParams,
    basis: &BasisMatrix,
    x_windows: &[Array1<f64>],
    y_window: &Array1<f64>,
) -> Result<f64> {
    if x_windows.len() != neuron.weights.nrows() {
        return Err(Error::Shape(format!(
            "{} input windows for {} weight rows",
            x_windows.len(),
            neuron.weights.nrows()
        )));
    }
    if neuron.weights.ncols() != basis.synaptic.ncols()
        || neuron.feedback.len() != basis.feedback.ncols()
    {
        return Err(Error::Shape("weights do not match basis".into()));
    }
    if y_window.len() != basis.feedback.nrows() {
        return Err(Error::Shape(format!(
            "feedback window has length {}, basis expects {}",
            y_window.len(),
            basis.feedback.nrows()
        )));
    }
    let mut u = neuron.bias;
    for (j, window) in x_windows.iter().enumerate() {
        if window.len() != basis.synaptic.nrows() {
            return Err(Error::Shape(format!(
                "input window {j} has length {}, basis expects {}",
                window.len(),
                basis.synaptic.nrows()
            )));
        }
        // w' (A' x) == (A w)' x, without forming the kernel
        let projected = basis.synaptic.t().dot(window);
        u += neuron.weights.row(j).dot(&projected);
    }
    let projected = basis.feedback.t().dot(y_window);
    u += neuron.feedback.dot(&projected);
    Ok(u)
}

fn check_example(kernels: &KernelSet, x: &EncodedExample) -> Result<()> {
    if x.inputs.len() != kernels.dims.n_x {
        return Err(Error::Shape(format!(
            "example has {} input trains, model expects {}",
            x.inputs.len(),
            kernels.dims.n_x
        )));
    }
    Ok(())
}

/// Potentials for all neurons and steps with every feedback spike held at
/// zero, plus the number of kernel accumulations performed. Work scales with
/// the spike count: each input spike scatters at most tau_syn kernel entries
/// forward per neuron.
pub fn potentials_zero_feedback_counted(
    kernels: &KernelSet,
    x: &EncodedExample,
) -> Result<(Array2<f64>, u64)> {
    check_example(kernels, x)?;
    let n_y = kernels.dims.n_y;
    let tau = kernels.dims.tau_syn;
    let t_max = x.horizon();
    let spikes: Vec<Vec<usize>> = x.inputs.iter().map(SpikeTrain::spike_indices).collect();

    let mut u = Array2::zeros((n_y, t_max));
    let mut ops = 0u64;
    for i in 0..n_y {
        u.row_mut(i).fill(kernels.bias[i]);
        let alpha = &kernels.synaptic[i];
        for (j, spike_list) in spikes.iter().enumerate() {
            for &src in spike_list {
                let end = (src + 1 + tau).min(t_max);
                for m in (src + 1)..end {
                    u[[i, m]] += alpha[[j, m - src - 1]];
                    ops += 1;
                }
            }
        }
    }
    Ok((u, ops))
}

/// `potentials_zero_feedback_counted` without the meter.
pub fn potentials_zero_feedback(kernels: &KernelSet, x: &EncodedExample) -> Result<Array2<f64>> {
    potentials_zero_feedback_counted(kernels, x).map(|(u, _)| u)
}

/// Potentials when each neuron's own output train is known in advance
/// (training with assigned targets). Feedback at step t only sees spikes
/// strictly before t.
pub fn potentials_with_outputs(
    kernels: &KernelSet,
    x: &EncodedExample,
    outputs: &[SpikeTrain],
) -> Result<Array2<f64>> {
    if outputs.len() != kernels.dims.n_y {
        return Err(Error::Shape(format!(
            "{} output trains for {} neurons",
            outputs.len(),
            kernels.dims.n_y
        )));
    }
    let t_max = x.horizon();
    if outputs.iter().any(|train| train.len() != t_max) {
        return Err(Error::Shape("output trains do not match the horizon".into()));
    }
    let (mut u, _) = potentials_zero_feedback_counted(kernels, x)?;
    let tau = kernels.dims.tau_fb;
    for (i, train) in outputs.iter().enumerate() {
        let beta = &kernels.feedback[i];
        for src in train.spike_indices() {
            let end = (src + 1 + tau).min(t_max);
            for m in (src + 1)..end {
                u[[i, m]] += beta[m - src - 1];
            }
        }
    }
    Ok(u)
}

/// Log-probability of an entire observed train `y` under one neuron, using
/// the true past of `y` for feedback: the sum over steps of
/// log g(u_t) for spikes and log(1 - g(u_t)) for silences.
pub fn log_likelihood_neuron(
    neuron: &NeuronParams,
    basis: &BasisMatrix,
    y: &SpikeTrain,
    x: &[SpikeTrain],
) -> Result<f64> {
    let t_max = y.len();
    if x.iter().any(|train| train.len() != t_max) {
        return Err(Error::Shape("input trains do not match the output length".into()));
    }
    let tau_syn = basis.synaptic.nrows();
    let tau_fb = basis.feedback.nrows();
    let mut ll = 0.0;
    for t in 1..=t_max {
        let x_windows: Vec<Array1<f64>> =
            x.iter().map(|train| window_at(train, t, tau_syn)).collect();
        let y_window = window_at(y, t, tau_fb);
        let u = membrane_potential(neuron, basis, &x_windows, &y_window)?;
        ll += if y.get(t - 1) == 1 {
            log_activation(u)
        } else {
            log_activation_complement(u)
        };
    }
    Ok(ll)
}
