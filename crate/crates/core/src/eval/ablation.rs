//! The four-variant ablation protocol.
//!
//! Variants differ only in which regularizers survive: `backbone` strips the
//! dual-stream heads entirely (plain late fusion, task loss only), `no_dec`
//! and `no_orth` zero one regularizer weight each, and `full` keeps the base
//! configuration. Every variant shares each seed's split, initialization
//! stream, and batch order, so per-seed comparisons are paired. Cells are
//! independent fits and run through the parallel helper.

use crate::data::{self, MultimodalDataset, SplitRatios};
use crate::error::{Error, Result};
use crate::eval::diagnostics::{self, DiagnosticsReport};
use crate::eval::metrics::MetricSet;
use crate::eval::{self};
use crate::losses::LossWeights;
use crate::model::{DsrsdModel, ModelConfig, ModelVariant};
use crate::parallel;
use crate::rng::{self, tag};
use crate::trainer::{self, TrainConfig};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// One Table-style ablation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Backbone,
    NoDec,
    NoOrth,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Backbone,
        AblationVariant::NoDec,
        AblationVariant::NoOrth,
        AblationVariant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::Backbone => "backbone",
            AblationVariant::NoDec => "no_dec",
            AblationVariant::NoOrth => "no_orth",
            AblationVariant::Full => "full",
        }
    }
}

impl std::fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything one ablation cell needs: the shared model and trainer settings
/// plus how to split the dataset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitRatios,
}

/// Loss weights a variant trains under.
pub fn variant_weights(base: &LossWeights, variant: AblationVariant) -> LossWeights {
    match variant {
        AblationVariant::Backbone => LossWeights {
            con: 0.0,
            align: 0.0,
            dec: 0.0,
            orth: 0.0,
            task: base.task,
        },
        AblationVariant::NoDec => LossWeights { dec: 0.0, ..*base },
        AblationVariant::NoOrth => LossWeights { orth: 0.0, ..*base },
        AblationVariant::Full => *base,
    }
}

/// One (variant, seed) training run, evaluated on its test split.
#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub variant: AblationVariant,
    pub seed: u64,
    /// Effective loss weights, echoed so the table is self-describing.
    pub weights: LossWeights,
    pub test: MetricSet,
    pub best_val_auc: f64,
    /// Held-out representation diagnostics; absent for the backbone, which
    /// has no dual-stream heads to measure.
    pub diagnostics: Option<DiagnosticsReport>,
}

/// Seed-aggregated view of one variant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AblationSummary {
    pub variant: AblationVariant,
    pub weights: LossWeights,
    pub mean: MetricSet,
    /// Sample standard deviation over seeds.
    pub std: MetricSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
    pub summaries: Vec<AblationSummary>,
}

/// A trained cell model, kept so callers can probe the fitted variants
/// (corruption sweeps, extra diagnostics) without refitting.
pub struct FittedVariant {
    pub variant: AblationVariant,
    pub seed: u64,
    pub model: DsrsdModel,
}

/// The table plus the models behind its rows; `fitted[i]` produced `cells[i]`.
pub struct AblationOutcome {
    pub table: AblationTable,
    pub fitted: Vec<FittedVariant>,
}

fn run_cell(
    config: &AblationConfig,
    dataset: &MultimodalDataset,
    variant: AblationVariant,
    seed: u64,
) -> Result<(FittedVariant, AblationCell)> {
    let (train, val, test) = data::split(dataset, config.split, seed)?;
    let model_config = ModelConfig {
        variant: match variant {
            AblationVariant::Backbone => ModelVariant::Backbone,
            _ => ModelVariant::Full,
        },
        ..config.model.clone()
    };
    let mut model = DsrsdModel::new(model_config, &mut rng::stream(seed, tag::INIT))?;
    let weights = variant_weights(&config.train.weights, variant);
    let train_config = TrainConfig {
        weights,
        ..config.train.clone()
    };
    let fit = trainer::fit(&mut model, &train, &val, &train_config, seed, |_| {})?;
    let test_metrics = eval::evaluate(&model, &test)?;
    let diag = match variant {
        AblationVariant::Backbone => None,
        _ => Some(diagnostics::diagnostics(&model, &test)?),
    };
    let cell = AblationCell {
        variant,
        seed,
        weights,
        test: test_metrics,
        best_val_auc: fit.best_val_auc,
        diagnostics: diag,
    };
    Ok((
        FittedVariant {
            variant,
            seed,
            model,
        },
        cell,
    ))
}

/// Train and evaluate all four variants on `dataset` for every seed.
pub fn ablation_run(
    config: &AblationConfig,
    dataset: &MultimodalDataset,
    seeds: &[u64],
) -> Result<AblationOutcome> {
    if seeds.len() < 3 {
        return Err(Error::config(format!(
            "ablation needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    if config.model.variant != ModelVariant::Full {
        return Err(Error::config(
            "ablation derives its own variants; configure the full model".to_string(),
        ));
    }
    config.model.validate()?;
    config.train.validate()?;

    let mut grid = Vec::with_capacity(AblationVariant::ALL.len() * seeds.len());
    for variant in AblationVariant::ALL {
        for &seed in seeds {
            grid.push((variant, seed));
        }
    }
    let runs: Vec<Result<(FittedVariant, AblationCell)>> =
        parallel::par_map(grid, |(variant, seed)| {
            run_cell(config, dataset, variant, seed)
        });

    let mut fitted = Vec::with_capacity(runs.len());
    let mut cells = Vec::with_capacity(runs.len());
    for run in runs {
        let (f, c) = run?;
        fitted.push(f);
        cells.push(c);
    }

    let mut summaries = Vec::with_capacity(AblationVariant::ALL.len());
    for variant in AblationVariant::ALL {
        let group: Vec<&AblationCell> =
            cells.iter().filter(|c| c.variant == variant).collect();
        let stat = |pick: fn(&AblationCell) -> f64| {
            let values: Vec<f64> = group.iter().map(|c| pick(c)).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            (mean, std)
        };
        let (auc_m, auc_s) = stat(|c| c.test.auc);
        let (acc_m, acc_s) = stat(|c| c.test.acc);
        let (f1_m, f1_s) = stat(|c| c.test.f1);
        summaries.push(AblationSummary {
            variant,
            weights: group[0].weights,
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
        });
    }

    Ok(AblationOutcome {
        table: AblationTable { cells, summaries },
        fitted,
    })
}

/// Write the ablation as a CSV table: one row per (variant, seed), then
/// `mean`/`std` rows per variant with the marker in the seed column.
pub fn write_ablation_csv(table: &AblationTable, path: &Path) -> Result<()> {
    let io_err = |source| Error::io(path.to_path_buf(), source);
    let fmt_diag = |d: &Option<DiagnosticsReport>, pick: fn(&DiagnosticsReport) -> f64| match d {
        Some(d) => format!("{:.6}", pick(d)),
        None => String::new(),
    };
    let mut out = Vec::new();
    writeln!(
        out,
        "variant,seed,auc,acc,f1,offdiag_energy,orth_residual,\
         lambda_con,lambda_align,lambda_dec,lambda_orth,lambda_task"
    )
    .map_err(io_err)?;
    for c in &table.cells {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            c.variant,
            c.seed,
            c.test.auc,
            c.test.acc,
            c.test.f1,
            fmt_diag(&c.diagnostics, |d| d.offdiag_energy),
            fmt_diag(&c.diagnostics, |d| d.orth_residual),
            c.weights.con,
            c.weights.align,
            c.weights.dec,
            c.weights.orth,
            c.weights.task
        )
        .map_err(io_err)?;
    }
    for s in &table.summaries {
        writeln!(
            out,
            "{},mean,{:.6},{:.6},{:.6},,,{},{},{},{},{}",
            s.variant,
            s.mean.auc,
            s.mean.acc,
            s.mean.f1,
            s.weights.con,
            s.weights.align,
            s.weights.dec,
            s.weights.orth,
            s.weights.task
        )
        .map_err(io_err)?;
        writeln!(
            out,
            "{},std,{:.6},{:.6},{:.6},,,,,,,",
            s.variant, s.std.auc, s.std.acc, s.std.f1
        )
        .map_err(io_err)?;
    }
    std::fs::write(path, out).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{self, SyntheticSpec};

    fn tiny_setup() -> (AblationConfig, MultimodalDataset) {
        let config = AblationConfig {
            model: ModelConfig {
                embed_dim: 4,
                encoder_hidden: 8,
                head_hidden: 8,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                batch_size: 64,
                max_epochs: 2,
                patience: 10,
                base_lr: 1e-3,
                ..TrainConfig::default()
            },
            split: SplitRatios::default(),
        };
        let dataset = synthetic::generate(
            &SyntheticSpec {
                n: 150,
                ..SyntheticSpec::default()
            },
            41,
        )
        .unwrap();
        (config, dataset)
    }

    #[test]
    fn four_variants_with_the_declared_weight_vectors() {
        let (config, dataset) = tiny_setup();
        let outcome = ablation_run(&config, &dataset, &[1, 2, 3]).unwrap();
        let table = &outcome.table;
        assert_eq!(table.cells.len(), 12);
        assert_eq!(table.summaries.len(), 4);
        let names: Vec<&str> = table.summaries.iter().map(|s| s.variant.as_str()).collect();
        assert_eq!(names, ["backbone", "no_dec", "no_orth", "full"]);

        let base = &config.train.weights;
        let by_name = |n: &str| {
            table
                .summaries
                .iter()
                .find(|s| s.variant.as_str() == n)
                .unwrap()
                .weights
        };
        let backbone = by_name("backbone");
        assert_eq!(
            (backbone.con, backbone.align, backbone.dec, backbone.orth),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(backbone.task, base.task);
        let no_dec = by_name("no_dec");
        assert_eq!(no_dec.dec, 0.0);
        assert_eq!(no_dec.orth, base.orth);
        assert_eq!(no_dec.con, base.con);
        let no_orth = by_name("no_orth");
        assert_eq!(no_orth.orth, 0.0);
        assert_eq!(no_orth.dec, base.dec);
        assert_eq!(by_name("full"), *base);
    }

    #[test]
    fn full_cells_match_a_manual_run_of_the_same_protocol() {
        let (config, dataset) = tiny_setup();
        let outcome = ablation_run(&config, &dataset, &[5, 6, 7]).unwrap();
        let cell = outcome
            .table
            .cells
            .iter()
            .find(|c| c.variant == AblationVariant::Full && c.seed == 6)
            .unwrap();

        let (train, val, test) = data::split(&dataset, config.split, 6).unwrap();
        let mut model =
            DsrsdModel::new(config.model.clone(), &mut rng::stream(6, tag::INIT)).unwrap();
        let fit = trainer::fit(&mut model, &train, &val, &config.train, 6, |_| {}).unwrap();
        let metrics = eval::evaluate(&model, &test).unwrap();
        assert_eq!(cell.test.auc.to_bits(), metrics.auc.to_bits());
        assert_eq!(cell.best_val_auc.to_bits(), fit.best_val_auc.to_bits());
    }

    #[test]
    fn repeated_runs_produce_identical_tables() {
        let (config, dataset) = tiny_setup();
        let a = serde_json::to_string(&ablation_run(&config, &dataset, &[1, 2, 3]).unwrap().table)
            .unwrap();
        let b = serde_json::to_string(&ablation_run(&config, &dataset, &[1, 2, 3]).unwrap().table)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diagnostics_attach_to_every_variant_but_the_backbone() {
        let (config, dataset) = tiny_setup();
        let outcome = ablation_run(&config, &dataset, &[1, 2, 3]).unwrap();
        for cell in &outcome.table.cells {
            match cell.variant {
                AblationVariant::Backbone => assert!(cell.diagnostics.is_none()),
                _ => {
                    let d = cell.diagnostics.as_ref().unwrap();
                    assert!(d.offdiag_energy >= 0.0 && d.offdiag_energy.is_finite());
                    assert!(d.orth_residual >= 0.0 && d.orth_residual.is_finite());
                }
            }
        }
    }

    #[test]
    fn fitted_models_line_up_with_cells() {
        let (config, dataset) = tiny_setup();
        let outcome = ablation_run(&config, &dataset, &[1, 2, 3]).unwrap();
        for (f, c) in outcome.fitted.iter().zip(&outcome.table.cells) {
            assert_eq!(f.variant, c.variant);
            assert_eq!(f.seed, c.seed);
            let (_, _, test) = data::split(&dataset, config.split, c.seed).unwrap();
            let metrics = eval::evaluate(&f.model, &test).unwrap();
            assert_eq!(metrics.auc.to_bits(), c.test.auc.to_bits());
        }
    }

    #[test]
    fn csv_rows_are_keyed_by_variant_name() {
        let (config, dataset) = tiny_setup();
        let outcome = ablation_run(&config, &dataset, &[1, 2, 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ablation.csv");
        write_ablation_csv(&outcome.table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 12 + 8);
        assert!(lines[0].starts_with("variant,seed,"));
        for name in ["backbone", "no_dec", "no_orth", "full"] {
            assert_eq!(
                lines.iter().filter(|l| l.starts_with(&format!("{name},"))).count(),
                3 + 2,
                "{name} rows"
            );
        }
        let backbone_row = lines.iter().find(|l| l.starts_with("backbone,1,")).unwrap();
        let fields: Vec<&str> = backbone_row.split(',').collect();
        assert_eq!(fields[5], "", "backbone has no offdiag column");
        assert_eq!(fields[7..12], ["0", "0", "0", "0", "1"]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (config, dataset) = tiny_setup();
        assert!(ablation_run(&config, &dataset, &[1, 2]).is_err());
        let mut backbone_config = config.clone();
        backbone_config.model.variant = ModelVariant::Backbone;
        assert!(ablation_run(&backbone_config, &dataset, &[1, 2, 3]).is_err());
    }
}
