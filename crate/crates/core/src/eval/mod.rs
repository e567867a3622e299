//! Model evaluation: scoring, metrics, representation diagnostics,
//! corruption sweeps, ablation tables, and embedding export.

pub mod ablation;
pub mod diagnostics;
pub mod export;
pub mod metrics;
pub mod sweep;

use crate::autodiff::Graph;
use crate::data::MultimodalDataset;
use crate::error::{Error, Result};
use crate::model::DsrsdModel;
use crate::rng::{self, tag};

/// Rows per evaluation batch.
pub const EVAL_BATCH_ROWS: usize = 256;

/// Evaluation-mode probability of class 1 for every sample, in dataset
/// order. Deterministic: dropout is off and parameters are read-only.
pub fn predict_scores(model: &DsrsdModel, dataset: &MultimodalDataset) -> Result<Vec<f64>> {
    if model.config.num_classes != 2 {
        return Err(Error::config(format!(
            "binary scoring needs 2 classes, model has {}",
            model.config.num_classes
        )));
    }
    let mut scores = Vec::with_capacity(dataset.len());
    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(EVAL_BATCH_ROWS) {
        let (x_a, x_b, _) = dataset.gather(chunk);
        let mut g = Graph::new();
        let bound = model.store.bind_constant(&mut g);
        let xa = g.constant(x_a);
        let xb = g.constant(x_b);
        let mut unused = rng::stream(0, tag::DROPOUT);
        let out = model.forward(&mut g, &bound, xa, xb, false, 0.0, &mut unused)?;
        let logits = g.value(out.logits);
        for i in 0..logits.rows() {
            let row = logits.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let exps: Vec<f64> = row.iter().map(|&l| (l - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            scores.push(exps[1] / denom);
        }
    }
    Ok(scores)
}

/// Score a dataset and compute AUC, accuracy, and F1 against its labels.
pub fn evaluate(model: &DsrsdModel, dataset: &MultimodalDataset) -> Result<metrics::MetricSet> {
    let scores = predict_scores(model, dataset)?;
    metrics::metric_set(&scores, &dataset.labels)
}
