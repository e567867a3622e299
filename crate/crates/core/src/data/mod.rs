//! Datasets: paired two-modality feature matrices with labels, presence
//! masks, optional ground-truth generative factors, seeded splitting,
//! epoch batching, and modality corruption.

pub mod csv;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One of the two fused modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    A,
    B,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::A => "a",
            Modality::B => "b",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Modality> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Modality::A),
            "b" => Ok(Modality::B),
            other => Err(Error::config(format!(
                "unknown modality '{other}', expected 'a' or 'b'"
            ))),
        }
    }
}

/// Ground-truth generative factors kept alongside synthetic data so
/// representation claims can be checked against what actually generated
/// the features.
#[derive(Debug, Clone)]
pub struct GroundTruthFactors {
    /// `N x k_s` factors common to both modalities.
    pub shared: Tensor,
    /// `N x k_p` factors private to each modality.
    pub private_a: Tensor,
    pub private_b: Tensor,
}

/// Paired features for both modalities plus labels. Rows align across all
/// fields; the row index is the pairing key.
#[derive(Debug, Clone)]
pub struct MultimodalDataset {
    pub features_a: Tensor,
    pub features_b: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Per-sample flags; cleared by modality corruption alongside zeroing.
    pub present_a: Vec<bool>,
    pub present_b: Vec<bool>,
    pub factors: Option<GroundTruthFactors>,
}

impl MultimodalDataset {
    /// Assemble and validate: equal row counts, labels in range, and every
    /// declared class actually present.
    pub fn new(
        features_a: Tensor,
        features_b: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<MultimodalDataset> {
        let n = features_a.rows();
        if features_b.rows() != n || labels.len() != n {
            return Err(Error::data(format!(
                "row counts disagree: A has {n}, B has {}, labels {}",
                features_b.rows(),
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::data("dataset has no rows".to_string()));
        }
        let mut seen = vec![false; num_classes];
        for (i, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::data(format!(
                    "label {label} at row {i} is outside 0..{num_classes}"
                )));
            }
            seen[label] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::data(format!(
                "class {missing} has no samples in the dataset"
            )));
        }
        Ok(MultimodalDataset {
            features_a,
            features_b,
            labels,
            num_classes,
            present_a: vec![true; n],
            present_b: vec![true; n],
            factors: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim_a(&self) -> usize {
        self.features_a.cols()
    }

    pub fn dim_b(&self) -> usize {
        self.features_b.cols()
    }

    /// Clone the rows at `idx`, in that order. Factors come along.
    pub fn select(&self, idx: &[usize]) -> MultimodalDataset {
        let take = |t: &Tensor| Tensor::from_fn(idx.len(), t.cols(), |i, j| t.get(idx[i], j));
        MultimodalDataset {
            features_a: take(&self.features_a),
            features_b: take(&self.features_b),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            present_a: idx.iter().map(|&i| self.present_a[i]).collect(),
            present_b: idx.iter().map(|&i| self.present_b[i]).collect(),
            factors: self.factors.as_ref().map(|f| GroundTruthFactors {
                shared: take(&f.shared),
                private_a: take(&f.private_a),
                private_b: take(&f.private_b),
            }),
        }
    }

    /// Feature matrices and labels for the rows at `idx`.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Tensor, Vec<usize>) {
        let take = |t: &Tensor| Tensor::from_fn(idx.len(), t.cols(), |i, j| t.get(idx[i], j));
        (
            take(&self.features_a),
            take(&self.features_b),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// True where the named modality is flagged present.
    pub fn presence(&self, modality: Modality) -> &[bool] {
        match modality {
            Modality::A => &self.present_a,
            Modality::B => &self.present_b,
        }
    }
}

/// Three-way split fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        if self.train < 0.0 || self.val < 0.0 || self.test < 0.0 {
            return Err(Error::config("split ratios must be non-negative".to_string()));
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Seeded permutation, then contiguous cuts of `round(ratio * N)` rows for
/// train and validation with the remainder as test. Any empty part is a
/// configuration error.
pub fn split(
    dataset: &MultimodalDataset,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(MultimodalDataset, MultimodalDataset, MultimodalDataset)> {
    ratios.validate()?;
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, tag::SPLIT));
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_val = (ratios.val * n as f64).round() as usize;
    if n_train + n_val > n {
        return Err(Error::config(format!(
            "split of {n} rows leaves no test rows ({n_train} train + {n_val} val)"
        )));
    }
    let n_test = n - n_train - n_val;
    for (name, count) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if count == 0 {
            return Err(Error::config(format!(
                "{name} split is empty for {n} rows at ratios {ratios:?}"
            )));
        }
    }
    Ok((
        dataset.select(&order[..n_train]),
        dataset.select(&order[n_train..n_train + n_val]),
        dataset.select(&order[n_train + n_val..]),
    ))
}

/// Independently, with probability `p`, zero one modality's features and
/// clear its presence flag. Labels and the other modality are untouched.
pub fn apply_modality_dropout(
    dataset: &MultimodalDataset,
    modality: Modality,
    p: f64,
    seed: u64,
) -> Result<MultimodalDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!(
            "modality dropout probability must be in [0, 1], got {p}"
        )));
    }
    let mut out = dataset.clone();
    let mut r = rng::stream(seed, tag::MASK);
    let (features, present) = match modality {
        Modality::A => (&mut out.features_a, &mut out.present_a),
        Modality::B => (&mut out.features_b, &mut out.present_b),
    };
    let cols = features.cols();
    for i in 0..dataset.len() {
        if r.gen::<f64>() < p {
            present[i] = false;
            for j in 0..cols {
                features.set(i, j, 0.0);
            }
        }
    }
    Ok(out)
}

/// Shuffled epoch order cut into batches; the last short batch is kept.
pub fn epoch_batches(n: usize, batch_size: usize, r: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}
