//! The work behind each subcommand: cross-validated training, checkpoint
//! evaluation, axis sweeps, gradient checking, and encoding previews.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use spikeglm::checkpoint::{load_checkpoint, save_checkpoint};
use spikeglm::data::{load_idx, select_subset, RawImage};
use spikeglm::encoding::{rate_encode, EncodedExample};
use spikeglm::error::{Error, Result};
use spikeglm::glm::{BasisMatrix, ModelDims, ModelParams};
use spikeglm::inference::evaluate;
use spikeglm::seeds::{derive_seed, rng_from, streams};
use spikeglm::train::{fit, DesiredOutputScheme, EpochRecord, FitConfig};
use spikeglm::verify::{
    gradcheck_conventional, gradcheck_first_to_spike, random_instance, InstanceBounds,
};

use crate::config::ExperimentConfig;
use crate::rows::{append_rows, ResultRow};

/// Artifacts a training run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub curve_path: PathBuf,
    pub selected_eta: f64,
}

fn load_training_split(config: &ExperimentConfig) -> Result<Vec<RawImage>> {
    let images = load_idx(&config.dataset.images, &config.dataset.labels)?;
    let (train, _) = select_subset(
        &images,
        &config.dataset_spec(),
        derive_seed(config.seed, &[streams::SUBSET]),
    )?;
    Ok(train)
}

fn fit_config(config: &ExperimentConfig, eta: f64, seed: u64) -> Result<FitConfig> {
    Ok(FitConfig {
        trainer: config.trainer()?,
        epochs: config.training.epochs,
        eta,
        scheme: DesiredOutputScheme::new(config.training.desired_period)?,
        encoding: config.encoding_mode()?,
        seed,
    })
}

/// Picks a learning rate by k-fold cross-validation on the training split,
/// scoring candidates by mean validation accuracy under the first
/// configured decoder. Candidates whose training diverges are disqualified;
/// ties go to the smaller rate. A single candidate skips validation.
fn select_eta(
    config: &ExperimentConfig,
    train: &[RawImage],
    dims: ModelDims,
    basis: &BasisMatrix,
) -> Result<f64> {
    let candidates = &config.training.eta_candidates;
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let folds = config.training.cv_folds;
    if train.len() < folds {
        return Err(Error::Domain(format!(
            "{} training examples cannot form {} folds",
            train.len(),
            folds
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng_from(config.seed, &[streams::CV, 0]));
    let decoder = config.decoders()?[0];

    let mut best: Option<(f64, f64)> = None;
    for &eta in candidates {
        let mut total_accuracy = 0.0;
        let mut diverged = false;
        for fold in 0..folds {
            let lo = fold * train.len() / folds;
            let hi = (fold + 1) * train.len() / folds;
            let fit_images: Vec<RawImage> = order[..lo]
                .iter()
                .chain(&order[hi..])
                .map(|&idx| train[idx].clone())
                .collect();
            let val_images: Vec<RawImage> =
                order[lo..hi].iter().map(|&idx| train[idx].clone()).collect();

            // every fold and candidate starts from the same initialization
            // so the comparison only sees the learning rate
            let mut init_rng = rng_from(config.seed, &[streams::INIT]);
            let mut params = ModelParams::init_uniform(dims, basis.clone(), &mut init_rng)?;
            let cfg = fit_config(config, eta, derive_seed(config.seed, &[streams::CV, fold as u64, 0]))?;
            match fit(&mut params, &fit_images, &cfg) {
                Ok(_) => {}
                Err(Error::Numeric(_)) => {
                    diverged = true;
                    break;
                }
                Err(other) => return Err(other),
            }

            let val = spikeglm::encoding::encode_dataset(
                &val_images,
                dims.horizon,
                derive_seed(config.seed, &[streams::CV, fold as u64, 1]),
                0,
            )?;
            let summary = evaluate(
                &params,
                &val,
                decoder,
                config.eval.trials_per_example,
                derive_seed(config.seed, &[streams::CV, fold as u64, 2]),
            )?;
            total_accuracy += summary.accuracy;
        }
        if diverged {
            println!("eta {eta:e}: training diverged, candidate disqualified");
            continue;
        }
        let mean = total_accuracy / folds as f64;
        println!("eta {eta:e}: mean validation accuracy {mean:.4}");
        best = Some(match best {
            None => (mean, eta),
            Some((best_acc, best_eta)) => {
                if mean > best_acc || (mean == best_acc && eta < best_eta) {
                    (mean, eta)
                } else {
                    (best_acc, best_eta)
                }
            }
        });
    }
    match best {
        Some((_, eta)) => {
            println!("selected eta {eta:e}");
            Ok(eta)
        }
        None => Err(Error::Numeric(
            "every learning-rate candidate diverged during cross-validation".into(),
        )),
    }
}

/// Trains per the config (cross-validating the learning rate when several
/// candidates are given) and writes the checkpoint and training curve.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let train = load_training_split(config)?;
    let dims = config.model_dims();
    let basis = config.basis_matrix()?;

    let selected_eta = select_eta(config, &train, dims, &basis)?;

    // final model: fresh initialization, full training split, winning rate
    let mut init_rng = rng_from(config.seed, &[streams::INIT]);
    let mut params = ModelParams::init_uniform(dims, basis, &mut init_rng)?;
    let cfg = fit_config(config, selected_eta, derive_seed(config.seed, &[streams::FIT]))?;
    let curve = fit(&mut params, &train, &cfg)?;

    std::fs::create_dir_all(&config.output.dir)?;
    let checkpoint_path = config.checkpoint_path();
    save_checkpoint(&params, &checkpoint_path)?;
    let curve_path = config.curve_path();
    write_curve(&curve_path, &curve)?;
    Ok(TrainOutcome {
        checkpoint_path,
        curve_path,
        selected_eta,
    })
}

fn write_curve(path: &std::path::Path, curve: &[EpochRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(["epoch", "mean_loglik"])
        .and_then(|()| {
            curve.iter().try_for_each(|r| {
                writer.write_record([r.epoch.to_string(), r.mean_loglik.to_string()])
            })
        })
        .and_then(|()| writer.flush().map_err(csv::Error::from))
        .map_err(|e| Error::Format(format!("cannot write training curve: {e}")))
}

/// Evaluates the config's checkpoint on the test split with every
/// configured decoder and appends one result row per decoder.
pub fn run_eval(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let params = load_checkpoint(&config.checkpoint_path())?;
    let dims = config.model_dims();
    if params.dims != dims {
        return Err(Error::Consistency(format!(
            "checkpoint was trained with {:?} but the config asks for {:?}",
            params.dims, dims
        )));
    }

    let images = load_idx(&config.dataset.images, &config.dataset.labels)?;
    let (_, test) = select_subset(
        &images,
        &config.dataset_spec(),
        derive_seed(config.seed, &[streams::SUBSET]),
    )?;
    let encoded = spikeglm::encoding::encode_dataset(
        &test,
        dims.horizon,
        derive_seed(config.seed, &[streams::EVAL, 0]),
        0,
    )?;

    let digest = config.digest();
    let mut rows = Vec::new();
    for (d_idx, decoder) in config.decoders()?.into_iter().enumerate() {
        let summary = evaluate(
            &params,
            &encoded,
            decoder,
            config.eval.trials_per_example,
            derive_seed(config.seed, &[streams::EVAL, 1 + d_idx as u64]),
        )?;
        rows.push(ResultRow {
            config_digest: digest.clone(),
            decoder: decoder.name().into(),
            k: dims.k_syn,
            t: dims.horizon,
            n_y: dims.n_y,
            accuracy: summary.accuracy,
            mean_ops: summary.mean_ops,
            mean_decision_time: summary.mean_decision_time,
            fallback_fraction: summary.fallback_fraction,
            seed: config.seed,
        });
    }
    std::fs::create_dir_all(&config.output.dir)?;
    append_rows(&config.results_path(), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary the number of basis functions, holding the horizon fixed.
    K,
    /// Vary the horizon, setting K = T at each point.
    T,
}

/// Trains and evaluates one independent model per axis value. Each point
/// derives its own seed, so points can be reproduced in isolation.
pub fn run_sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<Vec<ResultRow>> {
    if values.is_empty() {
        return Err(Error::Domain("sweep values must not be empty".into()));
    }
    let mut all = Vec::new();
    for &value in values {
        let mut point = config.clone();
        let tag = match axis {
            SweepAxis::K => {
                point.model.k_synaptic = value;
                point.model.k_feedback = value;
                0
            }
            SweepAxis::T => {
                point.model.t = value;
                point.model.k_synaptic = value;
                point.model.k_feedback = value;
                point.model.tau_synaptic = None;
                point.model.tau_feedback = None;
                1
            }
        };
        point.seed = derive_seed(config.seed, &[streams::SWEEP, tag, value as u64]);
        point.validate()?;
        println!(
            "sweep point {}={value}: digest {}",
            if tag == 0 { "K" } else { "T" },
            point.digest()
        );
        run_train(&point)?;
        all.extend(run_eval(&point)?);
    }
    Ok(all)
}

/// Result of checking one trainer's gradients over random instances.
#[derive(Debug, Clone)]
pub struct GradCheckSummary {
    pub trainer: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub worst_coordinate: String,
    pub step: f64,
}

/// Compares analytic gradients with finite differences on randomly drawn
/// small instances; one summary per requested trainer.
pub fn run_gradcheck(
    instances: usize,
    seed: u64,
    step: f64,
    conventional: bool,
    first_to_spike: bool,
) -> Result<Vec<GradCheckSummary>> {
    if instances < 1 {
        return Err(Error::Domain("at least one instance is required".into()));
    }
    let mut rng = rng_from(seed, &[streams::GRADCHECK]);
    let bounds = InstanceBounds::default();
    let scheme = DesiredOutputScheme::default();

    let mut conv = GradCheckSummary {
        trainer: "conventional",
        instances,
        max_rel_error: 0.0,
        worst_coordinate: String::new(),
        step,
    };
    let mut fts = GradCheckSummary {
        trainer: "first-to-spike",
        instances,
        max_rel_error: 0.0,
        worst_coordinate: String::new(),
        step,
    };
    for _ in 0..instances {
        let (params, x) = random_instance(&mut rng, &bounds)?;
        if conventional {
            let report = gradcheck_conventional(&params, &x, &scheme, step)?;
            if report.max_rel_error >= conv.max_rel_error {
                conv.max_rel_error = report.max_rel_error;
                conv.worst_coordinate = report.worst_coordinate;
            }
        }
        if first_to_spike {
            let report = gradcheck_first_to_spike(&params, &x, step)?;
            if report.max_rel_error >= fts.max_rel_error {
                fts.max_rel_error = report.max_rel_error;
                fts.worst_coordinate = report.worst_coordinate;
            }
        }
    }
    let mut out = Vec::new();
    if conventional {
        out.push(conv);
    }
    if first_to_spike {
        out.push(fts);
    }
    Ok(out)
}

/// Renders one training example's encoded spike trains as text: the
/// `rows` most active inputs, most spikes first.
pub fn run_encode_preview(
    config: &ExperimentConfig,
    index: usize,
    rows: usize,
) -> Result<String> {
    let train = load_training_split(config)?;
    if index >= train.len() {
        return Err(Error::Domain(format!(
            "example index {index} out of range ({} training examples)",
            train.len()
        )));
    }
    let image = &train[index];
    let horizon = config.model_dims().horizon;
    let mut rng = rng_from(config.seed, &[streams::ENCODE, 0, index as u64]);
    let encoded: EncodedExample = rate_encode(image, horizon, &mut rng)?;

    let digit = config.dataset.digits[encoded.label];
    let mut text = format!(
        "example {index} of {}: class {} (digit {digit}), horizon {horizon}\n",
        train.len(),
        encoded.label
    );
    let mut order: Vec<usize> = (0..encoded.inputs.len()).collect();
    order.sort_by_key(|&j| (std::cmp::Reverse(encoded.inputs[j].count_ones()), j));
    for &j in order.iter().take(rows) {
        let train_str: String = encoded.inputs[j]
            .samples()
            .iter()
            .map(|&s| if s == 1 { '#' } else { '.' })
            .collect();
        writeln!(text, "input {j:>3} |{train_str}|").expect("writing to a String");
    }
    let fraction = spikeglm::encoding::spike_fraction(&encoded.inputs)?;
    writeln!(text, "spike fraction across all inputs: {fraction:.4}").expect("writing to a String");
    Ok(text)
}
