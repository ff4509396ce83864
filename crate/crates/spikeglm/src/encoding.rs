//! Bernoulli rate encoding of images into spike trains.

use rand::Rng;

use crate::data::RawImage;
use crate::error::{Error, Result};
use crate::seeds::{rng_from, streams};

/// Intensity divisor chosen so the brightest pixel (255) maps to firing
/// probability exactly 1/2.
pub const INTENSITY_SCALE: f64 = 510.0;

/// A binary discrete-time sample vector; the universal signal format.
/// Entries are 0 or 1, enforced at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    samples: Vec<u8>,
}

impl SpikeTrain {
    pub fn new(samples: Vec<u8>) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|&&s| s > 1) {
            return Err(Error::Domain(format!(
                "spike train sample {bad} is not binary"
            )));
        }
        Ok(Self { samples })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    /// Sample at 0-based step index.
    pub fn get(&self, idx: usize) -> u8 {
        self.samples[idx]
    }

    pub fn count_ones(&self) -> usize {
        self.samples.iter().filter(|&&s| s == 1).count()
    }

    /// 0-based indices of the steps that carry a spike.
    pub fn spike_indices(&self) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter_map(|(idx, &s)| (s == 1).then_some(idx))
            .collect()
    }
}

/// A set of input spike trains plus the class index they encode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub inputs: Vec<SpikeTrain>,
    pub label: usize,
}

impl EncodedExample {
    pub fn new(inputs: Vec<SpikeTrain>, label: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Shape("example has no input trains".into()));
        }
        let len = inputs[0].len();
        if inputs.iter().any(|train| train.len() != len) {
            return Err(Error::Shape("input trains differ in length".into()));
        }
        Ok(Self { inputs, label })
    }

    /// Common horizon of the input trains.
    pub fn horizon(&self) -> usize {
        self.inputs[0].len()
    }
}

/// Whether training presents a fresh stochastic encoding of each image every
/// epoch or reuses the first draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingMode {
    Redraw,
    Frozen,
}

/// Encodes one image as independent Bernoulli trains, one per pixel, with
/// firing probability `pixel / 510`. Draw order is fixed (pixels outer,
/// steps inner); zero pixels consume no randomness since their trains are
/// all-zero with probability one.
pub fn rate_encode(image: &RawImage, horizon: usize, rng: &mut impl Rng) -> Result<EncodedExample> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let mut inputs = Vec::with_capacity(image.pixels.len());
    for &value in &image.pixels {
        if value == 0 {
            inputs.push(SpikeTrain::zeros(horizon));
            continue;
        }
        let p = f64::from(value) / INTENSITY_SCALE;
        let samples = (0..horizon)
            .map(|_| u8::from(rng.gen::<f64>() < p))
            .collect();
        inputs.push(SpikeTrain { samples });
    }
    EncodedExample::new(inputs, image.label as usize)
}

/// Encodes a whole dataset with per-example derived seeds, so example `idx`
/// in epoch `epoch` always sees the same draw for a given base seed.
pub fn encode_dataset(
    images: &[RawImage],
    horizon: usize,
    base_seed: u64,
    epoch: u64,
) -> Result<Vec<EncodedExample>> {
    images
        .iter()
        .enumerate()
        .map(|(idx, image)| {
            let mut rng = rng_from(base_seed, &[streams::ENCODE, epoch, idx as u64]);
            rate_encode(image, horizon, &mut rng)
        })
        .collect()
}

/// Fraction of ones across all samples of all trains.
pub fn spike_fraction(trains: &[SpikeTrain]) -> Result<f64> {
    let total: usize = trains.iter().map(SpikeTrain::len).sum();
    if total == 0 {
        return Err(Error::Domain("no samples to average".into()));
    }
    let ones: usize = trains.iter().map(SpikeTrain::count_ones).sum();
    Ok(ones as f64 / total as f64)
}
