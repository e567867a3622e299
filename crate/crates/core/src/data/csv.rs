//! CSV ingestion and export plus the JSON manifest tying the files together.
//!
//! Feature files carry a `f0,f1,...` header and one sample per row; the
//! label file carries a single `label` column of class indices. Floats are
//! written with 17 significant digits so a load after an export reproduces
//! every bit. An optional context feature file is concatenated into
//! modality A at load time, since the fusion path is strictly bimodal.

use super::MultimodalDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Names the dataset's files and its basic shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub features_a: String,
    pub features_b: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_ctx: Option<String>,
    pub dim_a: usize,
    pub dim_b: usize,
    pub num_classes: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::io(path.to_path_buf(), source)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e
        .position()
        .map(|p| format!(" at line {}", p.line()))
        .unwrap_or_default();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        kind => Error::data(format!("{}{line}: {kind:?}", path.display())),
    }
}

/// Write a feature matrix with header `f0..f{D-1}`.
pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = (0..features.cols()).map(|j| format!("f{j}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..features.rows() {
        let row: Vec<String> = features.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Write the single-column label file.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["label"]).map_err(|e| csv_err(path, e))?;
    for label in labels {
        w.write_record([label.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a feature matrix, reporting the file line of any bad cell.
pub fn read_features(path: &Path) -> Result<Tensor> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut count = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        if record.len() != width {
            return Err(Error::data(format!(
                "{} line {line}: {} cells, header has {width}",
                path.display(),
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::data(format!(
                    "{} line {line}: non-numeric cell '{cell}' in column f{j}",
                    path.display()
                ))
            })?;
            rows.push(value);
        }
        count += 1;
    }
    Tensor::from_vec(count, width, rows)
}

/// Read the label column.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut labels = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let cell = record.get(0).unwrap_or_default();
        let label: usize = cell.trim().parse().map_err(|_| {
            Error::data(format!(
                "{} line {line}: non-integer label '{cell}'",
                path.display()
            ))
        })?;
        labels.push(label);
    }
    Ok(labels)
}

/// Load feature, label, and optional context files into one dataset.
pub fn load_files(
    path_a: &Path,
    path_b: &Path,
    path_labels: &Path,
    path_ctx: Option<&Path>,
    num_classes: usize,
) -> Result<MultimodalDataset> {
    let mut features_a = read_features(path_a)?;
    let features_b = read_features(path_b)?;
    let labels = read_labels(path_labels)?;
    if let Some(ctx_path) = path_ctx {
        let ctx = read_features(ctx_path)?;
        if ctx.rows() != features_a.rows() {
            return Err(Error::data(format!(
                "{} has {} rows, {} has {}",
                ctx_path.display(),
                ctx.rows(),
                path_a.display(),
                features_a.rows()
            )));
        }
        let (n, da, dc) = (features_a.rows(), features_a.cols(), ctx.cols());
        features_a = Tensor::from_fn(n, da + dc, |i, j| {
            if j < da {
                features_a.get(i, j)
            } else {
                ctx.get(i, j - da)
            }
        });
    }
    if features_b.rows() != features_a.rows() || labels.len() != features_a.rows() {
        return Err(Error::data(format!(
            "row counts disagree: {} has {}, {} has {}, {} has {}",
            path_a.display(),
            features_a.rows(),
            path_b.display(),
            features_b.rows(),
            path_labels.display(),
            labels.len()
        )));
    }
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::data(format!(
                "{} line {}: label {label} is outside 0..{num_classes}",
                path_labels.display(),
                i + 2
            )));
        }
    }
    MultimodalDataset::new(features_a, features_b, labels, num_classes)
}

/// Write the three CSVs and a manifest into `dir`; returns the manifest path.
pub fn export_dataset(dir: &Path, dataset: &MultimodalDataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_features(&dir.join("features_a.csv"), &dataset.features_a)?;
    write_features(&dir.join("features_b.csv"), &dataset.features_b)?;
    write_labels(&dir.join("labels.csv"), &dataset.labels)?;
    let manifest = DatasetManifest {
        features_a: "features_a.csv".to_string(),
        features_b: "features_b.csv".to_string(),
        labels: "labels.csv".to_string(),
        features_ctx: None,
        dim_a: dataset.dim_a(),
        dim_b: dataset.dim_b(),
        num_classes: dataset.num_classes,
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::data(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Load a dataset through its manifest; relative file names resolve against
/// the manifest's directory.
pub fn load_manifest(manifest_path: &Path) -> Result<MultimodalDataset> {
    let body = std::fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&body).map_err(|e| {
        Error::data(format!("{}: {e}", manifest_path.display()))
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |name: &str| {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let ctx = manifest.features_ctx.as_deref().map(resolve);
    let dataset = load_files(
        &resolve(&manifest.features_a),
        &resolve(&manifest.features_b),
        &resolve(&manifest.labels),
        ctx.as_deref(),
        manifest.num_classes,
    )?;
    let expected_dim_a = manifest.dim_a;
    if dataset.dim_a() != expected_dim_a || dataset.dim_b() != manifest.dim_b {
        return Err(Error::data(format!(
            "{}: manifest says dims {}x{}, files have {}x{}",
            manifest_path.display(),
            expected_dim_a,
            manifest.dim_b,
            dataset.dim_a(),
            dataset.dim_b()
        )));
    }
    Ok(dataset)
}
