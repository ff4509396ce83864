//! Model persistence. Checkpoints are a single JSON object with an
//! explicit format version so stale files fail loudly instead of
//! deserializing into nonsense.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::ModelParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model: ModelParams,
}

/// Writes `params` as compact JSON. Serialization is lossless for f64 and
/// field order is fixed, so identical models produce identical bytes.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        model: params.clone(),
    };
    let body = serde_json::to_string(&file)
        .map_err(|e| Error::Format(format!("cannot serialize checkpoint: {e}")))?;
    fs::write(path, body)?;
    Ok(())
}

/// Reads a checkpoint back, rejecting unknown versions and models that
/// fail validation.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let body = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&body)
        .map_err(|e| Error::Format(format!("malformed checkpoint {}: {e}", path.display())))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    file.model.validate()?;
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{BasisMatrix, ModelDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_params() -> ModelParams {
        let dims = ModelDims::with_full_windows(3, 2, 4, 2, 2);
        let basis = BasisMatrix::raised_cosine(2, 4, 2, 4, 7500.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        ModelParams::init_uniform(dims, basis, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_preserves_the_model_exactly() {
        let params = sample_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let params = sample_params();
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.json");
        let second = dir.path().join("b.json");
        save_checkpoint(&params, &first).unwrap();
        let loaded = load_checkpoint(&first).unwrap();
        save_checkpoint(&loaded, &second).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn unknown_version_and_garbage_are_format_errors() {
        let params = sample_params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&params, &path).unwrap();
        let body = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":99");
        std::fs::write(&path, body).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));

        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));

        assert!(matches!(
            load_checkpoint(&dir.path().join("nope.json")),
            Err(Error::Io(_))
        ));
    }
}
