//! IDX container ingestion and class-balanced subset selection.
//!
//! The IDX layout is the classic MNIST one: big-endian 32-bit header words,
//! magic 2051 for images with dims `[N, 28, 28]`, magic 2049 for labels
//! with dim `[N]`, then the raw bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pixels per image; only 28x28 layouts are accepted.
pub const IMAGE_PIXELS: usize = 784;
pub const IMAGE_SIDE: usize = 28;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// One grayscale image paired with its digit label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub pixels: Vec<u8>,
    pub label: u8,
}

/// Which digits participate in a task and how many samples to draw per class.
/// `digit_set` order defines the contiguous class indices: the first digit
/// becomes class 0, the second class 1, and so on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub digit_set: Vec<u8>,
    pub per_class_train: usize,
    pub per_class_test: usize,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.digit_set.is_empty() {
            return Err(Error::Domain("digit set is empty".into()));
        }
        for (pos, &d) in self.digit_set.iter().enumerate() {
            if d > 9 {
                return Err(Error::Domain(format!("digit {d} out of range 0..=9")));
            }
            if self.digit_set[..pos].contains(&d) {
                return Err(Error::Domain(format!("digit {d} listed twice")));
            }
        }
        Ok(())
    }
}

fn read_u32_be(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an image/label file pair and returns the records in file order.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<RawImage>> {
    let mut images = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut images)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: expected image magic {IMAGE_MAGIC}, found {magic}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&mut images)? as usize;
    let rows = read_u32_be(&mut images)? as usize;
    let cols = read_u32_be(&mut images)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Format(format!(
            "{}: expected 28x28 images, found {rows}x{cols}",
            images_path.display()
        )));
    }

    let mut labels = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut labels)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: expected label magic {LABEL_MAGIC}, found {magic}",
            labels_path.display()
        )));
    }
    let label_count = read_u32_be(&mut labels)? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pixels = vec![0u8; IMAGE_PIXELS];
        images.read_exact(&mut pixels)?;
        let mut label = [0u8; 1];
        labels.read_exact(&mut label)?;
        if label[0] > 9 {
            return Err(Error::Format(format!("label {} out of range", label[0])));
        }
        out.push(RawImage {
            pixels,
            label: label[0],
        });
    }
    Ok(out)
}

/// Writes records as an IDX image/label file pair. Round-trips bit-exactly
/// through `load_idx`; used for fixtures and synthetic datasets.
pub fn write_idx(images_path: &Path, labels_path: &Path, data: &[RawImage]) -> Result<()> {
    for (pos, image) in data.iter().enumerate() {
        if image.pixels.len() != IMAGE_PIXELS {
            return Err(Error::Shape(format!(
                "image {pos} has {} pixels, expected {IMAGE_PIXELS}",
                image.pixels.len()
            )));
        }
        if image.label > 9 {
            return Err(Error::Domain(format!("image {pos}: label out of range")));
        }
    }
    let count = data.len() as u32;

    let mut images = BufWriter::new(File::create(images_path)?);
    images.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    images.write_all(&count.to_be_bytes())?;
    images.write_all(&(IMAGE_SIDE as u32).to_be_bytes())?;
    images.write_all(&(IMAGE_SIDE as u32).to_be_bytes())?;
    for image in data {
        images.write_all(&image.pixels)?;
    }
    images.flush()?;

    let mut labels = BufWriter::new(File::create(labels_path)?);
    labels.write_all(&LABEL_MAGIC.to_be_bytes())?;
    labels.write_all(&count.to_be_bytes())?;
    for image in data {
        labels.write_all(&[image.label])?;
    }
    labels.flush()?;
    Ok(())
}

/// Draws disjoint class-balanced train/test subsets.
///
/// The pool is shuffled once with a generator seeded by `seed`; each digit
/// then takes its first `per_class_train` occurrences in shuffled order for
/// training and the next `per_class_test` for test. Labels are remapped to
/// contiguous class indices following `spec.digit_set` order, and the
/// returned lists are grouped by class.
pub fn select_subset(
    data: &[RawImage],
    spec: &DatasetSpec,
    seed: u64,
) -> Result<(Vec<RawImage>, Vec<RawImage>)> {
    spec.validate()?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut train = Vec::with_capacity(spec.digit_set.len() * spec.per_class_train);
    let mut test = Vec::with_capacity(spec.digit_set.len() * spec.per_class_test);
    for (class, &digit) in spec.digit_set.iter().enumerate() {
        let wanted = spec.per_class_train + spec.per_class_test;
        let mut taken = 0usize;
        for &idx in &order {
            if data[idx].label != digit {
                continue;
            }
            let remapped = RawImage {
                pixels: data[idx].pixels.clone(),
                label: class as u8,
            };
            if taken < spec.per_class_train {
                train.push(remapped);
            } else {
                test.push(remapped);
            }
            taken += 1;
            if taken == wanted {
                break;
            }
        }
        if taken < wanted {
            return Err(Error::Capacity(format!(
                "digit {digit}: need {wanted} samples, pool has {taken}"
            )));
        }
    }
    Ok((train, test))
}
