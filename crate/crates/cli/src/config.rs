//! Run configuration for the command line front end.
//!
//! A run is described by one JSON document covering data, model, trainer,
//! split, and evaluation settings. Parsing is strict: unknown keys are a
//! configuration error. Every field has a default, so an empty document (or
//! no `--config` at all) is a valid run. Values are resolved in order:
//! built-in default, then config file, then the `DSRSD_SEED` environment
//! variable, then `--set key=value` overrides, then dedicated flags.

use std::path::{Path, PathBuf};

use dsrsd_core::checkpoint::sha256_json;
use dsrsd_core::data::csv::load_manifest;
use dsrsd_core::data::synthetic::{self, SyntheticSpec};
use dsrsd_core::data::{Modality, MultimodalDataset, SplitRatios};
use dsrsd_core::error::{Error, Result};
use dsrsd_core::eval::export::ExportOptions;
use dsrsd_core::eval::sweep::DEFAULT_RATES;
use dsrsd_core::model::ModelConfig;
use dsrsd_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

/// Where the input features come from.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset manifest to load. When absent, data is generated from
    /// `synthetic` instead.
    pub manifest: Option<PathBuf>,
    /// Generator settings used when no manifest is given.
    pub synthetic: SyntheticSpec,
}

/// Settings for the evaluation commands (`sweep`, `ablate`,
/// `export-embeddings`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Dropout rates for the robustness sweep.
    pub sweep_rates: Vec<f64>,
    /// Modalities corrupted in the sweep.
    pub sweep_modalities: Vec<Modality>,
    /// Mask seeds averaged over in the sweep.
    pub sweep_seeds: Vec<u64>,
    /// Training seeds averaged over in the ablation table.
    pub ablation_seeds: Vec<u64>,
    /// Which embedding blocks the export writes beyond the fused one.
    pub export: ExportOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sweep_rates: DEFAULT_RATES.to_vec(),
            sweep_modalities: vec![Modality::A, Modality::B],
            sweep_seeds: vec![1, 2, 3],
            ablation_seeds: vec![1, 2, 3, 4, 5],
            export: ExportOptions::default(),
        }
    }
}

/// The full run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; all randomness derives from it through tagged streams.
    pub seed: u64,
    /// Directory the commands write their artifacts into.
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitRatios,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("dsrsd-out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitRatios::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Hash of the run settings, excluding the output location so that the
    /// same experiment written to two directories shares one identity.
    pub fn content_hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)
            .map_err(|e| Error::config(format!("config serialization: {e}")))?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        sha256_json(&value)
    }

    /// Write the fully resolved configuration into the output directory so
    /// the run is reproducible from its artifacts alone.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.to_path_buf(), e))?;
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization: {e}")))?;
        let path = dir.join("config.json");
        std::fs::write(&path, body + "\n").map_err(|e| Error::io(path.clone(), e))?;
        Ok(path)
    }

    /// Load the dataset this run operates on: the manifest when one is
    /// configured, generated data otherwise.
    pub fn resolve_dataset(&self) -> Result<MultimodalDataset> {
        match &self.data.manifest {
            Some(path) => load_manifest(path),
            None => synthetic::generate(&self.data.synthetic, self.seed),
        }
    }
}

/// Build the run configuration from an optional file plus `key=value`
/// overrides addressed by dot paths (`train.base_lr=0.001`). Override values
/// parse as JSON first and fall back to plain strings, so numbers, booleans,
/// and arrays work unquoted.
pub fn load_config(file: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut value = match file {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.to_path_buf(), e))?;
            serde_json::from_str(&body)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
        None => serde_json::Value::Object(serde_json::Map::new()),
    };
    if !value.is_object() {
        return Err(Error::config("config file must hold a JSON object"));
    }
    for set in sets {
        apply_set(&mut value, set)?;
    }
    serde_json::from_value(value).map_err(|e| Error::config(format!("config: {e}")))
}

/// Apply one `path.to.key=value` override to the raw document.
fn apply_set(root: &mut serde_json::Value, set: &str) -> Result<()> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--set needs key=value, got '{set}'")))?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config(format!("--set path '{path}' has an empty segment")));
    }
    let parsed = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));

    let mut cursor = root;
    let (last, parents) = segments.split_last().expect("split_once gave a key");
    for segment in parents {
        let map = cursor.as_object_mut().ok_or_else(|| {
            Error::config(format!("--set path '{path}': '{segment}' is not an object"))
        })?;
        cursor = map
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
    }
    let map = cursor.as_object_mut().ok_or_else(|| {
        Error::config(format!("--set path '{path}': parent of '{last}' is not an object"))
    })?;
    map.insert(last.to_string(), parsed);
    Ok(())
}

/// Read the `DSRSD_SEED` environment override, if any.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var("DSRSD_SEED") {
        Ok(raw) => {
            let seed = raw
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::config(format!("DSRSD_SEED must be a u64, got '{raw}'")))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

/// Help footer listing every configuration key with its default value.
pub fn defaults_help() -> String {
    let body = serde_json::to_string_pretty(&RunConfig::default())
        .expect("default config serializes");
    format!("Configuration keys and their defaults (override via file or --set):\n{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_resolves_to_the_defaults() {
        let config = load_config(None, &[]).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.train.batch_size, 128);
        assert_eq!(config.eval.sweep_rates, vec![0.1, 0.3, 0.5]);
        assert!(config.data.manifest.is_none());
    }

    #[test]
    fn set_overrides_reach_nested_fields_with_json_typing() {
        let sets = vec![
            "train.batch_size=16".to_string(),
            "model.variant=\"backbone\"".to_string(),
            "eval.sweep_rates=[0.25]".to_string(),
            "data.synthetic.noise=1.5".to_string(),
        ];
        let config = load_config(None, &sets).unwrap();
        assert_eq!(config.train.batch_size, 16);
        assert_eq!(config.eval.sweep_rates, vec![0.25]);
        assert_eq!(config.data.synthetic.noise, 1.5);
    }

    #[test]
    fn bare_words_fall_back_to_strings() {
        let sets = vec!["model.variant=backbone".to_string()];
        let config = load_config(None, &sets).unwrap();
        assert_eq!(
            serde_json::to_value(config.model.variant).unwrap(),
            serde_json::json!("backbone")
        );
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for set in ["bogus=1", "train.bogus=1", "data.synthetic.bogus=1"] {
            let err = load_config(None, &[set.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{set}: {err}");
        }
    }

    #[test]
    fn malformed_set_arguments_are_config_errors() {
        for set in ["no_equals", "=5", "train..lr=1"] {
            let err = load_config(None, &[set.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{set}: {err}");
        }
    }

    #[test]
    fn content_hash_ignores_the_output_directory() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        a.output_dir = PathBuf::from("x");
        b.output_dir = PathBuf::from("y");
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        b.seed = 7;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
    }

    #[test]
    fn defaults_help_names_the_training_keys() {
        let help = defaults_help();
        assert!(help.contains("base_lr"));
        assert!(help.contains("sweep_rates"));
        assert!(help.contains("output_dir"));
    }
}
