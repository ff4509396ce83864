//! Experiment configuration: a versioned TOML file describing dataset,
//! model, training, and evaluation in one place. The effective config
//! (after command-line overrides) is hashed into a short digest that names
//! output files and tags result rows, so artifacts can always be traced
//! back to the exact settings that produced them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikeglm::data::{DatasetSpec, IMAGE_PIXELS};
use spikeglm::encoding::EncodingMode;
use spikeglm::error::{Error, Result};
use spikeglm::glm::{BasisMatrix, ModelDims, LOG_OFFSET_DEFAULT, LOG_STRETCH_DEFAULT};
use spikeglm::inference::Decoder;
use spikeglm::train::TrainerKind;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub digits: Vec<u8>,
    pub per_class_train: usize,
    pub per_class_test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub t: usize,
    pub k_synaptic: usize,
    pub k_feedback: usize,
    /// Synaptic window length; defaults to the horizon.
    pub tau_synaptic: Option<usize>,
    /// Feedback window length; defaults to the horizon.
    pub tau_feedback: Option<usize>,
    #[serde(default = "default_basis")]
    pub basis: String,
    #[serde(default = "default_log_stretch")]
    pub basis_log_stretch: f64,
    #[serde(default = "default_log_offset")]
    pub basis_log_offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub trainer: String,
    pub eta_candidates: Vec<f64>,
    pub epochs: usize,
    #[serde(default = "default_period")]
    pub desired_period: usize,
    #[serde(default = "default_encoding")]
    pub encoding: String,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub decoders: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials_per_example: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

fn default_basis() -> String {
    "raised-cosine".into()
}
fn default_log_stretch() -> f64 {
    LOG_STRETCH_DEFAULT
}
fn default_log_offset() -> f64 {
    LOG_OFFSET_DEFAULT
}
fn default_period() -> usize {
    4
}
fn default_encoding() -> String {
    "redraw".into()
}
fn default_cv_folds() -> usize {
    10
}
fn default_trials() -> usize {
    5
}

impl ExperimentConfig {
    /// Parses and validates a TOML config file. Syntax and semantic
    /// problems are both config errors; only the file read itself is I/O.
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&body)
            .map_err(|e| Error::Domain(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Domain(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.dataset_spec().validate()?;
        if self.dataset.per_class_train < 1 || self.dataset.per_class_test < 1 {
            return Err(Error::Domain("per-class counts must be at least 1".into()));
        }
        let m = &self.model;
        if m.t < 1 || m.k_synaptic < 1 || m.k_feedback < 1 {
            return Err(Error::Domain("model dimensions must be at least 1".into()));
        }
        if m.tau_synaptic.is_some_and(|tau| tau < 1) || m.tau_feedback.is_some_and(|tau| tau < 1)
        {
            return Err(Error::Domain("window lengths must be at least 1".into()));
        }
        let dims = self.model_dims();
        match m.basis.as_str() {
            "raised-cosine" => {}
            "identity" => {
                if dims.k_syn != dims.tau_syn || dims.k_fb != dims.tau_fb {
                    return Err(Error::Domain(
                        "identity basis requires K equal to the window length".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Domain(format!(
                    "unknown basis {other:?} (expected \"raised-cosine\" or \"identity\")"
                )))
            }
        }
        self.trainer()?;
        let tr = &self.training;
        if tr.eta_candidates.is_empty() {
            return Err(Error::Domain("eta_candidates must not be empty".into()));
        }
        if tr.eta_candidates.iter().any(|eta| !eta.is_finite() || *eta <= 0.0) {
            return Err(Error::Domain("eta candidates must be positive".into()));
        }
        if tr.epochs < 1 {
            return Err(Error::Domain("epochs must be at least 1".into()));
        }
        if tr.desired_period < 1 {
            return Err(Error::Domain("desired_period must be at least 1".into()));
        }
        self.encoding_mode()?;
        if tr.eta_candidates.len() > 1 && tr.cv_folds < 2 {
            return Err(Error::Domain(
                "selecting between eta candidates needs at least 2 folds".into(),
            ));
        }
        if self.eval.decoders.is_empty() {
            return Err(Error::Domain("at least one decoder is required".into()));
        }
        for name in &self.eval.decoders {
            parse_decoder(name)?;
        }
        if self.eval.trials_per_example < 1 {
            return Err(Error::Domain("trials_per_example must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            digit_set: self.dataset.digits.clone(),
            per_class_train: self.dataset.per_class_train,
            per_class_test: self.dataset.per_class_test,
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        let m = &self.model;
        ModelDims {
            n_x: IMAGE_PIXELS,
            n_y: self.dataset.digits.len(),
            horizon: m.t,
            tau_syn: m.tau_synaptic.unwrap_or(m.t),
            tau_fb: m.tau_feedback.unwrap_or(m.t),
            k_syn: m.k_synaptic,
            k_fb: m.k_feedback,
        }
    }

    pub fn basis_matrix(&self) -> Result<BasisMatrix> {
        let dims = self.model_dims();
        match self.model.basis.as_str() {
            "identity" => BasisMatrix::identity(dims.tau_syn, dims.tau_fb),
            _ => BasisMatrix::raised_cosine(
                dims.k_syn,
                dims.tau_syn,
                dims.k_fb,
                dims.tau_fb,
                self.model.basis_log_stretch,
                self.model.basis_log_offset,
            ),
        }
    }

    pub fn trainer(&self) -> Result<TrainerKind> {
        match self.training.trainer.as_str() {
            "conventional" => Ok(TrainerKind::Conventional),
            "first-to-spike" => Ok(TrainerKind::FirstToSpike),
            other => Err(Error::Domain(format!(
                "unknown trainer {other:?} (expected \"conventional\" or \"first-to-spike\")"
            ))),
        }
    }

    pub fn encoding_mode(&self) -> Result<EncodingMode> {
        match self.training.encoding.as_str() {
            "redraw" => Ok(EncodingMode::Redraw),
            "frozen" => Ok(EncodingMode::Frozen),
            other => Err(Error::Domain(format!(
                "unknown encoding {other:?} (expected \"redraw\" or \"frozen\")"
            ))),
        }
    }

    pub fn decoders(&self) -> Result<Vec<Decoder>> {
        self.eval.decoders.iter().map(|name| parse_decoder(name)).collect()
    }

    /// Short stable hash of the effective config. Serialization order is
    /// the struct order, so equal configs always digest equally.
    pub fn digest(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&body);
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output.dir.join(format!("checkpoint_{}.json", self.digest()))
    }

    pub fn curve_path(&self) -> PathBuf {
        self.output.dir.join(format!("curve_{}.csv", self.digest()))
    }

    pub fn results_path(&self) -> PathBuf {
        self.output.dir.join("results.csv")
    }
}

pub fn parse_decoder(name: &str) -> Result<Decoder> {
    match name {
        "rate" => Ok(Decoder::Rate),
        "first-to-spike" => Ok(Decoder::FirstToSpike),
        "rate-expected" => Ok(Decoder::RateExpected),
        other => Err(Error::Domain(format!(
            "unknown decoder {other:?} (expected \"rate\", \"first-to-spike\", or \"rate-expected\")"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
version = 1
seed = 7

[dataset]
images = "data/mnist/train-images-idx3-ubyte"
labels = "data/mnist/train-labels-idx1-ubyte"
digits = [5, 7]
per_class_train = 1000
per_class_test = 1000

[model]
t = 4
k_synaptic = 4
k_feedback = 4

[training]
trainer = "first-to-spike"
eta_candidates = [1e-3, 1e-4]
epochs = 200

[eval]
decoders = ["rate", "first-to-spike"]

[output]
dir = "runs/two-digit"
"#;

    fn sample() -> ExperimentConfig {
        let config: ExperimentConfig = toml::from_str(SAMPLE).unwrap();
        config.validate().unwrap();
        config
    }

    #[test]
    fn sample_config_parses_with_defaults() {
        let config = sample();
        assert_eq!(config.model_dims().tau_syn, 4);
        assert_eq!(config.model_dims().n_y, 2);
        assert_eq!(config.training.desired_period, 4);
        assert_eq!(config.training.cv_folds, 10);
        assert_eq!(config.eval.trials_per_example, 5);
        assert_eq!(config.trainer().unwrap(), TrainerKind::FirstToSpike);
        assert_eq!(
            config.decoders().unwrap(),
            vec![Decoder::Rate, Decoder::FirstToSpike]
        );
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = sample();
        let b = sample();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);

        let mut c = sample();
        c.seed = 8;
        assert_ne!(a.digest(), c.digest());
        let mut d = sample();
        d.model.t = 8;
        assert_ne!(a.digest(), d.digest());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut bad = sample();
        bad.version = 2;
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.training.eta_candidates.clear();
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.training.eta_candidates = vec![-1.0];
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.dataset.digits = vec![5, 5];
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.dataset.per_class_test = 0;
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.model.basis = "identity".into();
        bad.model.k_synaptic = 2;
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.eval.decoders = vec!["majority".into()];
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.training.trainer = "backprop".into();
        assert!(bad.validate().is_err());

        let mut bad = sample();
        bad.training.cv_folds = 1;
        assert!(bad.validate().is_err());

        // a single candidate never cross-validates, so one fold is fine
        let mut ok = sample();
        ok.training.eta_candidates = vec![1e-3];
        ok.training.cv_folds = 1;
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn identity_basis_with_matching_windows_is_accepted() {
        let mut config = sample();
        config.model.basis = "identity".into();
        config.validate().unwrap();
        let basis = config.basis_matrix().unwrap();
        assert_eq!(basis.synaptic.nrows(), 4);
        assert_eq!(basis.synaptic.ncols(), 4);
    }
}
