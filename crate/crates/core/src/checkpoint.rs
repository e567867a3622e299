//! Model checkpoints: a one-line JSON header describing the model, followed
//! by a flat little-endian f64 blob of every parameter in store order.
//! Save and load round-trip each parameter bit for bit.

use crate::error::{Error, Result};
use crate::model::{DsrsdModel, ModelConfig};
use crate::rng::{self, tag};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Bumped when the on-disk layout changes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format_version: u32,
    config_hash: String,
    model: ModelConfig,
    params: Vec<ParamInfo>,
}

/// A checkpoint read back from disk.
#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub model: DsrsdModel,
    pub config_hash: String,
}

/// Hex SHA-256 of a value's compact JSON encoding; used to stamp checkpoints
/// with the configuration that produced them.
pub fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_string(value)
        .map_err(|e| Error::config(format!("config not serializable: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Write `model` to `path`. Byte-deterministic for a given model state.
pub fn save(model: &DsrsdModel, config_hash: &str, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        model: model.config.clone(),
        params: model
            .store
            .tensors()
            .iter()
            .zip(model.store.names())
            .map(|(t, name)| ParamInfo {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::config(format!("checkpoint header not serializable: {e}")))?;

    let mut bytes = header_json.into_bytes();
    bytes.push(b'\n');
    bytes.reserve(model.store.num_values() * 8);
    for tensor in model.store.tensors() {
        for &v in tensor.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Read a checkpoint back. The model is rebuilt from the stored config and
/// every parameter overwritten from the blob.
pub fn load(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::data(format!("{}: missing checkpoint header", path.display())))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::data(format!("{}: bad checkpoint header: {e}", path.display())))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::data(format!(
            "{}: checkpoint format {} unsupported (this build reads {})",
            path.display(),
            header.format_version,
            FORMAT_VERSION
        )));
    }

    // The init draws are thrown away; only the layout matters here.
    let mut model = DsrsdModel::new(header.model.clone(), &mut rng::stream(0, tag::INIT))?;
    if model.store.len() != header.params.len() {
        return Err(Error::data(format!(
            "{}: header lists {} parameters, model has {}",
            path.display(),
            header.params.len(),
            model.store.len()
        )));
    }
    for (info, (tensor, name)) in header
        .params
        .iter()
        .zip(model.store.tensors().iter().zip(model.store.names()))
    {
        if info.name != *name || info.rows != tensor.rows() || info.cols != tensor.cols() {
            return Err(Error::data(format!(
                "{}: parameter '{}' ({}x{}) does not match model layout '{}' ({}x{})",
                path.display(),
                info.name,
                info.rows,
                info.cols,
                name,
                tensor.rows(),
                tensor.cols()
            )));
        }
    }

    let blob = &bytes[newline + 1..];
    let expected = model.store.num_values() * 8;
    if blob.len() != expected {
        return Err(Error::data(format!(
            "{}: parameter blob is {} bytes, expected {}",
            path.display(),
            blob.len(),
            expected
        )));
    }
    let mut offset = 0;
    for tensor in model.store.tensors_mut() {
        for v in tensor.values_mut() {
            let mut word = [0u8; 8];
            word.copy_from_slice(&blob[offset..offset + 8]);
            *v = f64::from_le_bytes(word);
            offset += 8;
        }
    }

    Ok(LoadedCheckpoint {
        model,
        config_hash: header.config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelVariant;

    fn small_model(variant: ModelVariant) -> DsrsdModel {
        let config = ModelConfig {
            embed_dim: 3,
            encoder_hidden: 4,
            head_hidden: 4,
            variant,
            ..ModelConfig::default()
        };
        DsrsdModel::new(config, &mut rng::stream(61, tag::INIT)).unwrap()
    }

    #[test]
    fn round_trip_preserves_every_parameter_bit() {
        let mut model = small_model(ModelVariant::Full);
        let awkward = [
            std::f64::consts::PI,
            -0.0,
            1e-300,
            f64::MIN_POSITIVE,
            0.1 + 0.2,
        ];
        for (i, v) in model.store.tensors_mut()[0].values_mut().iter_mut().enumerate() {
            *v = awkward[i % awkward.len()];
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, "abc123", &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.config_hash, "abc123");
        assert_eq!(loaded.model.config, model.config);
        assert_eq!(loaded.model.store.len(), model.store.len());
        for (a, b) in loaded.model.store.tensors().iter().zip(model.store.tensors()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn backbone_checkpoints_round_trip_too() {
        let model = small_model(ModelVariant::Backbone);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, "h", &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.model.config.variant, ModelVariant::Backbone);
        for (a, b) in loaded.model.store.tensors().iter().zip(model.store.tensors()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn header_is_one_json_line_followed_by_the_blob() {
        let model = small_model(ModelVariant::Full);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, "deadbeef", &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..newline]).unwrap();
        assert_eq!(header["format_version"], 1);
        assert_eq!(header["config_hash"], "deadbeef");
        assert_eq!(
            header["params"].as_array().unwrap().len(),
            model.store.len()
        );
        assert_eq!(bytes.len() - newline - 1, model.store.num_values() * 8);
    }

    #[test]
    fn saving_twice_produces_identical_bytes() {
        let model = small_model(ModelVariant::Full);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.ckpt");
        let p2 = dir.path().join("two.ckpt");
        save(&model, "h", &p1).unwrap();
        save(&model, "h", &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let model = small_model(ModelVariant::Full);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, "h", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("blob"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_format_version_is_rejected() {
        let model = small_model(ModelVariant::Full);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, "h", &path).unwrap();
        let text = std::fs::read(&path).unwrap();
        let newline = text.iter().position(|&b| b == b'\n').unwrap();
        let mut header: serde_json::Value = serde_json::from_slice(&text[..newline]).unwrap();
        header["format_version"] = serde_json::json!(99);
        let mut bytes = serde_json::to_vec(&header).unwrap();
        bytes.push(b'\n');
        bytes.extend_from_slice(&text[newline + 1..]);
        std::fs::write(&path, bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("format"), "{err}");
    }

    #[test]
    fn tampered_shapes_are_rejected() {
        let model = small_model(ModelVariant::Full);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, "h", &path).unwrap();
        let text = std::fs::read(&path).unwrap();
        let newline = text.iter().position(|&b| b == b'\n').unwrap();
        let mut header: serde_json::Value = serde_json::from_slice(&text[..newline]).unwrap();
        header["params"][0]["rows"] = serde_json::json!(999);
        let mut bytes = serde_json::to_vec(&header).unwrap();
        bytes.push(b'\n');
        bytes.extend_from_slice(&text[newline + 1..]);
        std::fs::write(&path, bytes).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("does not match"), "{err}");
    }

    #[test]
    fn config_hashes_separate_distinct_configs() {
        let a = sha256_json(&serde_json::json!({"seed": 1})).unwrap();
        let b = sha256_json(&serde_json::json!({"seed": 2})).unwrap();
        let a2 = sha256_json(&serde_json::json!({"seed": 1})).unwrap();
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }
}
