//! The training loop: AdamW with warmup-cosine learning rates, global-norm
//! clipping, ramped loss weights, early stopping on validation AUC, and a
//! per-epoch record stream for logging.

pub mod adamw;
pub mod schedule;

use crate::autodiff::Graph;
use crate::data::{self, MultimodalDataset};
use crate::error::{Error, Result};
use crate::eval::{self, metrics::MetricSet};
use crate::losses::{LossSettings, LossWeights};
use crate::model::{self, DsrsdModel};
use crate::rng::{self, tag};
use adamw::OptimizerState;
use serde::{Deserialize, Serialize};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation AUC before stopping.
    pub patience: usize,
    /// Fraction of total steps spent ramping the learning rate.
    pub warmup_frac: f64,
    pub base_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Target loss weights; the decorrelation and orthogonality entries
    /// ramp in over `ramp_epochs`.
    pub weights: LossWeights,
    pub ramp_epochs: usize,
    pub dropout: f64,
    pub loss: LossSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            warmup_frac: 0.05,
            base_lr: 1e-4,
            min_lr: 0.0,
            weight_decay: 1e-5,
            clip_norm: 5.0,
            weights: LossWeights::default(),
            ramp_epochs: 5,
            dropout: 0.2,
            loss: LossSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be positive".to_string()));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::config(format!(
                "warmup_frac must be in [0, 1), got {}",
                self.warmup_frac
            )));
        }
        if !(self.base_lr >= 0.0) || !(self.min_lr >= 0.0) || self.min_lr > self.base_lr {
            return Err(Error::config(format!(
                "need 0 <= min_lr <= base_lr, got {} and {}",
                self.min_lr, self.base_lr
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        for (name, w) in [
            ("con", self.weights.con),
            ("align", self.weights.align),
            ("dec", self.weights.dec),
            ("orth", self.weights.orth),
            ("task", self.weights.task),
        ] {
            if !(w >= 0.0) {
                return Err(Error::config(format!(
                    "loss weight '{name}' must be non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Size-weighted mean of the per-batch loss reports in one epoch.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EpochLosses {
    pub con: f64,
    pub align: f64,
    pub dec: f64,
    pub orth: f64,
    pub task: f64,
    pub total: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: EpochLosses,
    pub val: MetricSet,
    /// Learning rate of the epoch's final step.
    pub lr: f64,
    /// Effective loss weights this epoch.
    pub lambda: LossWeights,
}

/// Per-step clip bookkeeping.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepStats {
    pub lr: f64,
    pub preclip_norm: f64,
    pub postclip_norm: f64,
}

/// What a training run produced.
#[derive(Debug)]
pub struct FitResult {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub step_stats: Vec<StepStats>,
    pub aborted_steps: usize,
}

/// Train `model` in place. The best-validation-AUC parameters are restored
/// before returning; `sink` sees each epoch record as it is produced.
/// Deterministic given `(model init, datasets, config, seed)`.
pub fn fit(
    model: &mut DsrsdModel,
    train: &MultimodalDataset,
    val: &MultimodalDataset,
    config: &TrainConfig,
    seed: u64,
    mut sink: impl FnMut(&EpochRecord),
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("train and validation sets must be non-empty".to_string()));
    }
    {
        let first = val.labels[0];
        if val.labels.iter().all(|&y| y == first) {
            return Err(Error::config(
                "validation set has a single class; AUC is undefined".to_string(),
            ));
        }
    }

    let n = train.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.max_epochs * batches_per_epoch;
    let warmup_steps =
        ((config.warmup_frac * total_steps as f64).round() as usize).min(total_steps - 1);

    let mut shuffle_rng = rng::stream(seed, tag::SHUFFLE);
    let mut dropout_rng = rng::stream(seed, tag::DROPOUT);
    let mut opt = OptimizerState::new(&model.store, config.weight_decay);

    let mut records: Vec<EpochRecord> = Vec::new();
    let mut step_stats: Vec<StepStats> = Vec::new();
    let mut aborted_steps = 0usize;
    let mut consecutive_aborts = 0usize;
    let mut global_step = 0usize;
    let mut best_val_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = model.store.clone();
    let mut epochs_since_best = 0usize;
    let mut warned_single_row = false;

    for epoch in 0..config.max_epochs {
        let lambda = schedule::lambda_schedule(epoch, &config.weights, config.ramp_epochs);
        let mut sums = EpochLosses::default();
        let mut rows_seen = 0usize;
        let mut last_lr = 0.0;

        for batch in data::epoch_batches(n, config.batch_size, &mut shuffle_rng) {
            let lr = schedule::cosine_lr(
                global_step,
                total_steps,
                warmup_steps,
                config.base_lr,
                config.min_lr,
            );
            global_step += 1;
            last_lr = lr;

            let (x_a, x_b, labels) = train.gather(&batch);
            let step = (|| -> Result<StepOutcome> {
                let mut g = Graph::new();
                let bound = model.store.bind(&mut g);
                let xa = g.constant(x_a);
                let xb = g.constant(x_b);
                let out = model.forward(
                    &mut g,
                    &bound,
                    xa,
                    xb,
                    true,
                    config.dropout,
                    &mut dropout_rng,
                )?;
                let composed =
                    model::compose_training_loss(&mut g, &out, &labels, &lambda, &config.loss)?;
                let report = composed.report;
                let mut grads = g
                    .backward(composed.total)
                    .map(|mut grads| bound.collect_grads(&model.store, &mut grads))?;
                let preclip = adamw::clip_gradients(&mut grads, config.clip_norm)?;
                Ok(StepOutcome {
                    report,
                    grads,
                    preclip,
                })
            })();

            let step = match step {
                Ok(step) => step,
                Err(Error::Numerical(msg)) => {
                    aborted_steps += 1;
                    consecutive_aborts += 1;
                    log::warn!(
                        "step {global_step} aborted ({consecutive_aborts} in a row): {msg}"
                    );
                    if consecutive_aborts >= 3 {
                        return Err(Error::numerical(
                            "three consecutive non-finite steps; run aborted".to_string(),
                        ));
                    }
                    continue;
                }
                Err(other) => return Err(other),
            };
            consecutive_aborts = 0;
            if step.report.dec_skipped && !warned_single_row {
                warned_single_row = true;
                log::warn!("single-row batch: decorrelation term skipped");
            }

            step_stats.push(StepStats {
                lr,
                preclip_norm: step.preclip,
                postclip_norm: adamw::global_norm(&step.grads),
            });
            adamw::adamw_step(&mut model.store, &step.grads, &mut opt, lr)?;

            let b = labels.len() as f64;
            sums.con += step.report.con * b;
            sums.align += step.report.align * b;
            sums.dec += step.report.dec * b;
            sums.orth += step.report.orth * b;
            sums.task += step.report.task * b;
            sums.total += step.report.total * b;
            rows_seen += labels.len();
        }

        let losses = if rows_seen > 0 {
            let w = rows_seen as f64;
            EpochLosses {
                con: sums.con / w,
                align: sums.align / w,
                dec: sums.dec / w,
                orth: sums.orth / w,
                task: sums.task / w,
                total: sums.total / w,
            }
        } else {
            log::warn!("epoch {epoch}: every step aborted; losses recorded as 0");
            EpochLosses::default()
        };

        let val_metrics = eval::evaluate(model, val)?;
        let record = EpochRecord {
            epoch,
            losses,
            val: val_metrics,
            lr: last_lr,
            lambda,
        };
        sink(&record);
        records.push(record);

        if val_metrics.auc > best_val_auc {
            best_val_auc = val_metrics.auc;
            best_epoch = epoch;
            best_params = model.store.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.patience {
                break;
            }
        }
    }

    model.store.restore_from(&best_params);
    Ok(FitResult {
        records,
        best_epoch,
        best_val_auc,
        step_stats,
        aborted_steps,
    })
}

struct StepOutcome {
    report: crate::losses::LossReport,
    grads: Vec<crate::tensor::Tensor>,
    preclip: f64,
}
