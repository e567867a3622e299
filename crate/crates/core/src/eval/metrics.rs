//! Ranking and thresholded classification metrics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The three headline numbers for a binary task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auc: f64,
    pub acc: f64,
    pub f1: f64,
}

fn check_binary(scores: &[f64], labels: &[usize]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::data("no samples to score".to_string()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::data(format!(
            "binary metrics got label {bad}"
        )));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(Error::numerical("non-finite score".to_string()));
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative, ties
/// counted half. Computed by rank sum with tie-averaged ranks, which equals
/// explicit pair counting exactly: tied ranks are half-integers, so every
/// intermediate sum is exact in `f64` at any realistic size.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_binary(scores, labels)?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::data(
            "AUC needs both classes present".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Average 1-based rank within each tie group.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }
    let u = rank_sum_pos - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives * negatives) as f64)
}

/// Accuracy and positive-class F1 at a score threshold. Scores strictly
/// above the threshold predict the positive class. With no predicted
/// positives F1 is 0 by convention, flagged in the log.
pub fn accuracy_f1(scores: &[f64], labels: &[usize], threshold: f64) -> Result<(f64, f64)> {
    check_binary(scores, labels)?;
    let (mut tp, mut fp, mut fne, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => tn += 1,
        }
    }
    let acc = (tp + tn) as f64 / labels.len() as f64;
    let f1 = if tp + fp == 0 {
        log::warn!("no predicted positives at threshold {threshold}; F1 reported as 0");
        0.0
    } else if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    };
    Ok((acc, f1))
}

/// AUC plus accuracy and F1 at the 0.5 threshold.
pub fn metric_set(scores: &[f64], labels: &[usize]) -> Result<MetricSet> {
    let auc = auc(scores, labels)?;
    let (acc, f1) = accuracy_f1(scores, labels, 0.5)?;
    Ok(MetricSet { auc, acc, f1 })
}
