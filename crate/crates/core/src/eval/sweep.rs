//! Test-time modality-dropout sweeps.
//!
//! The model is never retrained: each cell corrupts a copy of the evaluation
//! set by zeroing one modality with probability `p`, evaluates, and compares
//! against the clean baseline. Cells run independently, so they are mapped
//! through the parallel helper; the mask stream is keyed by the cell's own
//! seed, which keeps the sweep reproducible and lets a fixed seed share its
//! mask draws across rates (larger `p` then corrupts a superset of rows).

use crate::data::{self, Modality, MultimodalDataset};
use crate::error::{Error, Result};
use crate::eval::{self, metrics::MetricSet};
use crate::model::DsrsdModel;
use crate::parallel;
use serde::Serialize;
use std::io::Write as _;
use std::path::Path;

/// The dropout grid used when the caller does not override it.
pub const DEFAULT_RATES: [f64; 3] = [0.1, 0.3, 0.5];

/// How far a corrupted run fell below the clean baseline (positive = worse).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricDelta {
    pub auc: f64,
    pub acc: f64,
    pub f1: f64,
}

impl MetricDelta {
    fn between(baseline: MetricSet, corrupted: MetricSet) -> MetricDelta {
        MetricDelta {
            auc: baseline.auc - corrupted.auc,
            acc: baseline.acc - corrupted.acc,
            f1: baseline.f1 - corrupted.f1,
        }
    }
}

/// One (modality, rate, seed) evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepCell {
    pub modality: Modality,
    pub p: f64,
    pub seed: u64,
    pub metrics: MetricSet,
    pub drop: MetricDelta,
}

/// Seed-aggregated view of one (modality, rate) grid point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepSummary {
    pub modality: Modality,
    pub p: f64,
    pub mean: MetricSet,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std: MetricSet,
    pub mean_drop: MetricDelta,
}

/// Full sweep output: the clean reference plus per-cell and aggregate rows.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub baseline: MetricSet,
    pub cells: Vec<SweepCell>,
    pub summaries: Vec<SweepSummary>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluate `model` on corrupted copies of `test` over the full
/// `(modality, rate, seed)` grid. The model itself is untouched.
pub fn dropout_sweep(
    model: &DsrsdModel,
    test: &MultimodalDataset,
    rates: &[f64],
    modalities: &[Modality],
    seeds: &[u64],
) -> Result<SweepTable> {
    if rates.is_empty() || modalities.is_empty() || seeds.is_empty() {
        return Err(Error::config(
            "sweep needs at least one rate, one modality, and one seed".to_string(),
        ));
    }
    for &p in rates {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("dropout rate {p} outside [0, 1]")));
        }
    }
    let baseline = eval::evaluate(model, test)?;

    let mut grid = Vec::with_capacity(modalities.len() * rates.len() * seeds.len());
    for &modality in modalities {
        for &p in rates {
            for &seed in seeds {
                grid.push((modality, p, seed));
            }
        }
    }
    let cells: Vec<Result<SweepCell>> = parallel::par_map(grid, |(modality, p, seed)| {
        let corrupted = data::apply_modality_dropout(test, modality, p, seed)?;
        let metrics = eval::evaluate(model, &corrupted)?;
        Ok(SweepCell {
            modality,
            p,
            seed,
            metrics,
            drop: MetricDelta::between(baseline, metrics),
        })
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::with_capacity(modalities.len() * rates.len());
    for &modality in modalities {
        for &p in rates {
            let group: Vec<&SweepCell> = cells
                .iter()
                .filter(|c| c.modality == modality && c.p == p)
                .collect();
            let (auc_m, auc_s) = mean_std(&group.iter().map(|c| c.metrics.auc).collect::<Vec<_>>());
            let (acc_m, acc_s) = mean_std(&group.iter().map(|c| c.metrics.acc).collect::<Vec<_>>());
            let (f1_m, f1_s) = mean_std(&group.iter().map(|c| c.metrics.f1).collect::<Vec<_>>());
            summaries.push(SweepSummary {
                modality,
                p,
                mean: MetricSet {
                    auc: auc_m,
                    acc: acc_m,
                    f1: f1_m,
                },
                std: MetricSet {
                    auc: auc_s,
                    acc: acc_s,
                    f1: f1_s,
                },
                mean_drop: MetricDelta::between(
                    baseline,
                    MetricSet {
                        auc: auc_m,
                        acc: acc_m,
                        f1: f1_m,
                    },
                ),
            });
        }
    }

    Ok(SweepTable {
        baseline,
        cells,
        summaries,
    })
}

/// Write the sweep as a CSV table: one row per cell, then `mean`/`std` rows
/// per grid point with the marker in the seed column.
pub fn write_sweep_csv(table: &SweepTable, path: &Path) -> Result<()> {
    let io_err = |source| Error::io(path.to_path_buf(), source);
    let mut out = Vec::new();
    writeln!(out, "modality,p,seed,auc,acc,f1,auc_drop,acc_drop,f1_drop").map_err(io_err)?;
    for c in &table.cells {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            c.modality,
            c.p,
            c.seed,
            c.metrics.auc,
            c.metrics.acc,
            c.metrics.f1,
            c.drop.auc,
            c.drop.acc,
            c.drop.f1
        )
        .map_err(io_err)?;
    }
    for s in &table.summaries {
        writeln!(
            out,
            "{},{},mean,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.modality,
            s.p,
            s.mean.auc,
            s.mean.acc,
            s.mean.f1,
            s.mean_drop.auc,
            s.mean_drop.acc,
            s.mean_drop.f1
        )
        .map_err(io_err)?;
        writeln!(
            out,
            "{},{},std,{:.6},{:.6},{:.6},,,",
            s.modality, s.p, s.std.auc, s.std.acc, s.std.f1
        )
        .map_err(io_err)?;
    }
    std::fs::write(path, out).map_err(io_err)
}
