//! Training objectives and their weighted combination.
//!
//! Five terms drive the model: a temperature-scaled contrastive loss over
//! cosine similarities of the projected shared streams, a mean squared
//! alignment penalty between them, a decorrelation penalty on the off-
//! diagonal of their cross-covariance, an orthogonality penalty between each
//! modality's shared and private streams, and label-smoothed cross-entropy
//! on the classifier logits. Every term is built from autodiff primitives so
//! one backward pass covers the whole objective.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Weights for the five loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub con: f64,
    pub align: f64,
    pub dec: f64,
    pub orth: f64,
    pub task: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            con: 1.0,
            align: 0.5,
            dec: 0.05,
            orth: 0.05,
            task: 1.0,
        }
    }
}

/// Knobs that shape individual terms rather than weight them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSettings {
    /// Contrastive temperature.
    pub tau: f64,
    /// Add the B-anchored contrastive direction and average.
    pub symmetric_infonce: bool,
    /// Label smoothing mass spread over the wrong classes.
    pub smoothing: f64,
}

impl Default for LossSettings {
    fn default() -> Self {
        LossSettings {
            tau: 0.1,
            symmetric_infonce: false,
            smoothing: 0.05,
        }
    }
}

/// Scalar values of the five terms for one batch.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub con: f64,
    pub align: f64,
    pub dec: f64,
    pub orth: f64,
    pub task: f64,
}

/// One batch's loss breakdown: component values, the weights in effect, and
/// the weighted total. `dec_skipped` records that the decorrelation term was
/// undefined (batch of one) and entered the total as zero.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossReport {
    pub con: f64,
    pub align: f64,
    pub dec: f64,
    pub orth: f64,
    pub task: f64,
    pub total: f64,
    pub weights: LossWeights,
    pub dec_skipped: bool,
}

/// Combine component values exactly the way [`total_loss`] chains graph
/// nodes, so the reported total matches the differentiated one bit for bit.
pub fn loss_report(
    c: LossComponents,
    weights: LossWeights,
    dec_skipped: bool,
) -> Result<LossReport> {
    for (name, v) in [
        ("con", c.con),
        ("align", c.align),
        ("dec", c.dec),
        ("orth", c.orth),
        ("task", c.task),
    ] {
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "loss component '{name}' is not finite: {v}"
            )));
        }
    }
    let total =
        weights.con * c.con + weights.align * c.align + weights.dec * c.dec
            + weights.orth * c.orth
            + weights.task * c.task;
    Ok(LossReport {
        con: c.con,
        align: c.align,
        dec: c.dec,
        orth: c.orth,
        task: c.task,
        total,
        weights,
        dec_skipped,
    })
}

/// Contrastive alignment over cosine similarities, anchored on modality A:
/// each sample's positive is its own row in `h_b`, every other row is a
/// negative. `symmetric` adds the B-anchored direction and halves the sum.
///
/// Cosines live in [-1, 1], so after dividing by any reasonable temperature
/// the exponentials stay comfortably inside `f64` range and no max-shift is
/// needed; the i-th numerator and denominator share the exact same
/// exponential term, which makes the single-sample loss exactly zero.
pub fn contrastive_loss(
    g: &mut Graph,
    h_a: Var,
    h_b: Var,
    tau: f64,
    symmetric: bool,
) -> Result<Var> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::config(format!(
            "contrastive temperature must be positive and finite, got {tau}"
        )));
    }
    if h_a.rows() != h_b.rows() {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            left_rows: h_a.rows(),
            left_cols: h_a.cols(),
            right_rows: h_b.rows(),
            right_cols: h_b.cols(),
        });
    }
    let sims = g.cosine_sim(h_a, h_b)?;
    let scaled = g.scalar_mul(sims, 1.0 / tau);
    let a_anchored = anchored_direction(g, scaled)?;
    if !symmetric {
        return Ok(a_anchored);
    }
    let flipped = g.transpose(scaled);
    let b_anchored = anchored_direction(g, flipped)?;
    let both = g.add(a_anchored, b_anchored)?;
    Ok(g.scalar_mul(both, 0.5))
}

/// Mean over anchors of `log(sum_j exp(S_ij)) - S_ii` for a scaled
/// similarity matrix whose rows are the anchors.
fn anchored_direction(g: &mut Graph, scaled: Var) -> Result<Var> {
    let exps = g.exp(scaled);
    let row_sums = g.row_sum(exps);
    let log_den = g.log(row_sums);
    let diag = g.diag(exps)?;
    let log_num = g.log(diag);
    let per_anchor = g.sub(log_den, log_num)?;
    Ok(g.mean(per_anchor))
}

/// Residual matching between the projected shared streams:
/// `(1/B) * sum_i ||h_a_i - h_b_i||^2`.
pub fn alignment_loss(g: &mut Graph, h_a: Var, h_b: Var) -> Result<Var> {
    let diff = g.sub(h_a, h_b)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    Ok(g.scalar_mul(total, 1.0 / h_a.rows() as f64))
}

/// Cross-covariance of two `B x d` stream matrices with per-column centering
/// and the unbiased `1/(B-1)` scale. Columns are deliberately not variance
/// normalized: the penalty must see raw covariance magnitudes.
pub fn cross_covariance(g: &mut Graph, h_a: Var, h_b: Var) -> Result<Var> {
    if h_a.rows() != h_b.rows() {
        return Err(Error::ShapeMismatch {
            op: "cross_covariance",
            left_rows: h_a.rows(),
            left_cols: h_a.cols(),
            right_rows: h_b.rows(),
            right_cols: h_b.cols(),
        });
    }
    let b = h_a.rows();
    if b < 2 {
        return Err(Error::config(format!(
            "cross covariance needs a batch of at least 2, got {b}"
        )));
    }
    let centered_a = center_columns(g, h_a)?;
    let centered_b = center_columns(g, h_b)?;
    let at = g.transpose(centered_a);
    let prod = g.matmul(at, centered_b)?;
    Ok(g.scalar_mul(prod, 1.0 / (b - 1) as f64))
}

fn center_columns(g: &mut Graph, h: Var) -> Result<Var> {
    let b = h.rows();
    let averager = g.constant(Tensor::filled(1, b, 1.0 / b as f64));
    let col_means = g.matmul(averager, h)?;
    let negated = g.scalar_mul(col_means, -1.0);
    g.add_row_bias(h, negated)
}

/// Sum of squared off-diagonal entries of a square covariance matrix.
pub fn decorrelation_loss(g: &mut Graph, c: Var) -> Result<Var> {
    let sq = g.square(c);
    let all = g.sum(sq);
    let diag = g.diag(c)?;
    let diag_sq = g.square(diag);
    let diag_total = g.sum(diag_sq);
    g.sub(all, diag_total)
}

/// Mean squared inner product between shared and private streams, summed
/// over both modalities: `(1/B) * sum_i (<s_a_i, p_a_i>^2 + <s_b_i, p_b_i>^2)`.
pub fn orthogonality_loss(
    g: &mut Graph,
    s_a: Var,
    p_a: Var,
    s_b: Var,
    p_b: Var,
) -> Result<Var> {
    let a = modality_orthogonality(g, s_a, p_a)?;
    let b = modality_orthogonality(g, s_b, p_b)?;
    g.add(a, b)
}

fn modality_orthogonality(g: &mut Graph, s: Var, p: Var) -> Result<Var> {
    let prod = g.elem_mul(s, p)?;
    let inner = g.row_sum(prod);
    let sq = g.square(inner);
    Ok(g.mean(sq))
}

/// Label-smoothed target distribution: the true class gets `1 - smoothing`,
/// the rest share `smoothing / (C - 1)`.
pub fn smoothed_targets(labels: &[usize], num_classes: usize, smoothing: f64) -> Result<Tensor> {
    if num_classes < 2 {
        return Err(Error::config(format!(
            "classification needs at least 2 classes, got {num_classes}"
        )));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::config(format!(
            "label smoothing must be in [0, 1), got {smoothing}"
        )));
    }
    let off = smoothing / (num_classes - 1) as f64;
    let on = 1.0 - smoothing;
    let mut t = Tensor::filled(labels.len(), num_classes, off);
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::data(format!(
                "label {label} at row {i} is outside 0..{num_classes}"
            )));
        }
        t.set(i, label, on);
    }
    Ok(t)
}

/// Cross-entropy between smoothed targets and the row-softmax of `logits`.
pub fn task_loss(
    g: &mut Graph,
    logits: Var,
    labels: &[usize],
    smoothing: f64,
) -> Result<Var> {
    if logits.rows() != labels.len() {
        return Err(Error::data(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let targets = smoothed_targets(labels, logits.cols(), smoothing)?;
    let tv = g.constant(targets);
    let log_probs = g.row_log_softmax(logits);
    let weighted = g.elem_mul(tv, log_probs)?;
    let total = g.sum(weighted);
    Ok(g.scalar_mul(total, -1.0 / labels.len() as f64))
}

/// Graph-side loss terms to combine. `None` means the term is absent this
/// step (no stream heads in the backbone variant, batch of one for the
/// decorrelation term).
pub struct LossTerms {
    pub con: Option<Var>,
    pub align: Option<Var>,
    pub dec: Option<Var>,
    pub orth: Option<Var>,
    pub task: Var,
}

/// Weighted sum of the present terms, chained in the fixed order
/// con, align, dec, orth, task. [`loss_report`] mirrors this order.
pub fn total_loss(g: &mut Graph, terms: &LossTerms, w: &LossWeights) -> Result<Var> {
    let mut acc = None;
    for (term, weight) in [
        (terms.con, w.con),
        (terms.align, w.align),
        (terms.dec, w.dec),
        (terms.orth, w.orth),
        (Some(terms.task), w.task),
    ] {
        let Some(var) = term else { continue };
        let scaled = g.scalar_mul(var, weight);
        acc = Some(match acc {
            None => scaled,
            Some(prev) => g.add(prev, scaled)?,
        });
    }
    Ok(acc.expect("task term is always present"))
}
