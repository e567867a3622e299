//! Synthetic paired-modality data with known shared and private factors.
//!
//! Both modalities are linear images of a common shared factor plus their
//! own private factor, mixed through orthonormal columns so the ground
//! truth stays identifiable up to rotation, plus isotropic Gaussian noise.
//! The label is a fixed linear functional of the shared factor alone, which
//! makes "the shared space carries the task" true by construction.

use super::{GroundTruthFactors, MultimodalDataset};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Width of the factor common to both modalities.
    pub shared_dim: usize,
    /// Width of each modality's own factor.
    pub private_dim: usize,
    /// Isotropic noise scale.
    pub noise: f64,
    /// Labeling direction in shared-factor space; drawn at random (then
    /// normalized) when absent.
    pub label_direction: Option<Vec<f64>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 2000,
            dim_a: 20,
            dim_b: 20,
            shared_dim: 4,
            private_dim: 4,
            noise: 0.5,
            label_direction: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("synthetic n must be positive".to_string()));
        }
        if self.shared_dim == 0 {
            return Err(Error::config("shared_dim must be positive".to_string()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::config(format!(
                "noise must be a finite non-negative number, got {}",
                self.noise
            )));
        }
        let k = self.shared_dim + self.private_dim;
        for (name, dim) in [("dim_a", self.dim_a), ("dim_b", self.dim_b)] {
            if dim < k {
                return Err(Error::config(format!(
                    "{name} = {dim} cannot hold {k} orthonormal mixing columns"
                )));
            }
        }
        if let Some(v) = &self.label_direction {
            if v.len() != self.shared_dim {
                return Err(Error::config(format!(
                    "label_direction has {} entries, shared_dim is {}",
                    v.len(),
                    self.shared_dim
                )));
            }
            if v.iter().map(|x| x * x).sum::<f64>() == 0.0 {
                return Err(Error::config(
                    "label_direction must not be the zero vector".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// What mixed the factors into features; returned alongside the dataset
/// for oracle checks, never persisted.
#[derive(Debug, Clone)]
pub struct MixingDetails {
    /// `dim_a x (k_s + k_p)`, orthonormal columns.
    pub mixing_a: Tensor,
    pub mixing_b: Tensor,
    /// Unit labeling direction, length `k_s`.
    pub direction: Vec<f64>,
}

/// Generate a dataset; deterministic per `(spec, seed)`.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<MultimodalDataset> {
    generate_with_details(spec, seed).map(|(ds, _)| ds)
}

/// As [`generate`], also exposing the mixing matrices and label direction.
pub fn generate_with_details(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(MultimodalDataset, MixingDetails)> {
    spec.validate()?;
    let mut r = rng::stream(seed, tag::SYNTHETIC);
    let (n, k_s, k_p) = (spec.n, spec.shared_dim, spec.private_dim);

    // Fixed draw order: factors, mixing, direction, noise.
    let shared = gaussian(&mut r, n, k_s);
    let private_a = gaussian(&mut r, n, k_p);
    let private_b = gaussian(&mut r, n, k_p);
    let mixing_a = orthonormal_mixing(&mut r, spec.dim_a, k_s + k_p);
    let mixing_b = orthonormal_mixing(&mut r, spec.dim_b, k_s + k_p);
    let direction = match &spec.label_direction {
        Some(v) => normalize(v.clone()),
        None => {
            let raw: Vec<f64> = (0..k_s).map(|_| StandardNormal.sample(&mut r)).collect();
            normalize(raw)
        }
    };

    let features_a = mix(&shared, &private_a, &mixing_a, spec.noise, &mut r);
    let features_b = mix(&shared, &private_b, &mixing_b, spec.noise, &mut r);
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let score: f64 = shared
                .row(i)
                .iter()
                .zip(&direction)
                .map(|(s, v)| s * v)
                .sum();
            usize::from(score > 0.0)
        })
        .collect();

    let mut dataset = MultimodalDataset::new(features_a, features_b, labels, 2)?;
    dataset.factors = Some(GroundTruthFactors {
        shared,
        private_a,
        private_b,
    });
    let details = MixingDetails {
        mixing_a,
        mixing_b,
        direction,
    };
    Ok((dataset, details))
}

fn gaussian(r: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// `[shared | private] * mixing^T + noise`, one modality.
fn mix(
    shared: &Tensor,
    private: &Tensor,
    mixing: &Tensor,
    noise: f64,
    r: &mut impl Rng,
) -> Tensor {
    let n = shared.rows();
    let k = shared.cols() + private.cols();
    let factors = Tensor::from_fn(n, k, |i, j| {
        if j < shared.cols() {
            shared.get(i, j)
        } else {
            private.get(i, j - shared.cols())
        }
    });
    let mut x = crate::tensor::matmul(&factors, &mixing.transposed()).expect("validated dims");
    if noise > 0.0 {
        for v in x.values_mut() {
            let e: f64 = StandardNormal.sample(r);
            *v += noise * e;
        }
    }
    x
}

/// Gaussian matrix orthonormalized column by column (modified Gram-Schmidt).
/// Gaussian columns are almost surely independent, so no re-draws needed.
fn orthonormal_mixing(r: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let mut m = gaussian(r, rows, cols);
    for j in 0..cols {
        for k in 0..j {
            let proj: f64 = (0..rows).map(|i| m.get(i, j) * m.get(i, k)).sum();
            for i in 0..rows {
                let v = m.get(i, j) - proj * m.get(i, k);
                m.set(i, j, v);
            }
        }
        let norm = (0..rows).map(|i| m.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..rows {
            let v = m.get(i, j) / norm;
            m.set(i, j, v);
        }
    }
    m
}
