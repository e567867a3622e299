//! Representation health measurements on an evaluation set.
//!
//! Everything here re-measures with plain matrix arithmetic what the loss
//! terms optimize through the graph: cross-covariance energy on and off the
//! diagonal, shared/private inner products, gate sharpness, and projection
//! norms. Agreement between the two routes is itself a tested property.

use super::EVAL_BATCH_ROWS;
use crate::autodiff::Graph;
use crate::data::MultimodalDataset;
use crate::error::{Error, Result};
use crate::model::DsrsdModel;
use crate::rng::{self, tag};
use crate::tensor::{dot, matmul, Tensor};
use serde::{Deserialize, Serialize};

/// Aggregated measurements, all non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Off-diagonal energy of the shared-stream cross-covariance.
    pub offdiag_energy: f64,
    /// Diagonal energy of the same matrix.
    pub diag_energy: f64,
    /// Mean squared shared/private inner product, both modalities pooled.
    pub orth_residual: f64,
    /// Mean entropy of the gate rows; at most ln 2 for two modalities.
    pub gate_entropy: f64,
    /// Mean row norm of each projected shared stream.
    pub h_norm_a: f64,
    pub h_norm_b: f64,
}

fn center_columns(t: &Tensor) -> Tensor {
    let (rows, cols) = t.shape();
    let mut means = vec![0.0; cols];
    for i in 0..rows {
        for (j, m) in means.iter_mut().enumerate() {
            *m += t.get(i, j) / rows as f64;
        }
    }
    Tensor::from_fn(rows, cols, |i, j| t.get(i, j) - means[j])
}

/// Measure a model over `dataset` in batches of 256, aggregating by
/// size-weighted mean. Needs the full variant: the backbone has no streams
/// to measure.
pub fn diagnostics(model: &DsrsdModel, dataset: &MultimodalDataset) -> Result<DiagnosticsReport> {
    let n = dataset.len() as f64;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut off_sum = 0.0;
    let mut diag_sum = 0.0;
    let mut cov_rows = 0.0;
    let mut orth_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut norm_a_sum = 0.0;
    let mut norm_b_sum = 0.0;
    for chunk in all.chunks(EVAL_BATCH_ROWS) {
        let (x_a, x_b, _) = dataset.gather(chunk);
        let mut g = Graph::new();
        let bound = model.store.bind_constant(&mut g);
        let xa = g.constant(x_a);
        let xb = g.constant(x_b);
        let mut unused = rng::stream(0, tag::DROPOUT);
        let out = model.forward(&mut g, &bound, xa, xb, false, 0.0, &mut unused)?;
        let streams = out.streams.as_ref().ok_or_else(|| {
            Error::config("diagnostics need the full variant; the backbone has no streams".to_string())
        })?;
        let h_a = g.value(streams.h_a).clone();
        let h_b = g.value(streams.h_b).clone();
        let s_a = g.value(streams.s_a).clone();
        let p_a = g.value(streams.p_a).clone();
        let s_b = g.value(streams.s_b).clone();
        let p_b = g.value(streams.p_b).clone();
        let alpha = g.value(streams.alpha).clone();
        let b = chunk.len();

        if b >= 2 {
            let ca = center_columns(&h_a);
            let cb = center_columns(&h_b);
            let mut c = matmul(&ca.transposed(), &cb)?;
            for v in c.values_mut() {
                *v /= (b - 1) as f64;
            }
            let (mut off, mut diag) = (0.0, 0.0);
            for i in 0..c.rows() {
                for j in 0..c.cols() {
                    let sq = c.get(i, j) * c.get(i, j);
                    if i == j {
                        diag += sq;
                    } else {
                        off += sq;
                    }
                }
            }
            off_sum += off * b as f64;
            diag_sum += diag * b as f64;
            cov_rows += b as f64;
        }
        for i in 0..b {
            orth_sum += dot(s_a.row(i), p_a.row(i)).powi(2);
            orth_sum += dot(s_b.row(i), p_b.row(i)).powi(2);
            entropy_sum += alpha
                .row(i)
                .iter()
                .map(|&a| if a > 0.0 { -a * a.ln() } else { 0.0 })
                .sum::<f64>();
            norm_a_sum += dot(h_a.row(i), h_a.row(i)).sqrt();
            norm_b_sum += dot(h_b.row(i), h_b.row(i)).sqrt();
        }
    }
    if cov_rows == 0.0 {
        log::warn!("every evaluation batch had a single row; covariance energies reported as 0");
    }
    Ok(DiagnosticsReport {
        offdiag_energy: if cov_rows > 0.0 { off_sum / cov_rows } else { 0.0 },
        diag_energy: if cov_rows > 0.0 { diag_sum / cov_rows } else { 0.0 },
        orth_residual: orth_sum / (2.0 * n),
        gate_entropy: entropy_sum / n,
        h_norm_a: norm_a_sum / n,
        h_norm_b: norm_b_sum / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{self, SyntheticSpec};
    use crate::losses;
    use crate::model::{ModelConfig, ModelVariant};
    use crate::params::Bound;

    fn model_and_data(variant: ModelVariant, n: usize) -> (DsrsdModel, MultimodalDataset) {
        let config = ModelConfig {
            input_dim_a: 20,
            input_dim_b: 20,
            embed_dim: 4,
            encoder_hidden: 8,
            head_hidden: 8,
            num_classes: 2,
            use_private_in_head: true,
            variant,
        };
        let model = DsrsdModel::new(config, &mut rng::stream(8, tag::INIT)).unwrap();
        let ds = synthetic::generate(
            &SyntheticSpec {
                n,
                ..SyntheticSpec::default()
            },
            9,
        )
        .unwrap();
        (model, ds)
    }

    #[test]
    fn plain_route_agrees_with_graph_loss_route() {
        // One batch covers the whole set, so the two paths see identical
        // rows and must agree to rounding.
        let (model, ds) = model_and_data(ModelVariant::Full, 100);
        let report = diagnostics(&model, &ds).unwrap();

        let (x_a, x_b, _) = ds.gather(&(0..100).collect::<Vec<_>>());
        let mut g = Graph::new();
        let bound: Bound = model.store.bind_constant(&mut g);
        let xa = g.constant(x_a);
        let xb = g.constant(x_b);
        let mut unused = rng::stream(0, tag::DROPOUT);
        let out = model
            .forward(&mut g, &bound, xa, xb, false, 0.0, &mut unused)
            .unwrap();
        let streams = out.streams.as_ref().unwrap();
        let c = losses::cross_covariance(&mut g, streams.h_a, streams.h_b).unwrap();
        let dec = losses::decorrelation_loss(&mut g, c).unwrap();
        let graph_offdiag = g.scalar_value(dec);
        assert!(
            (report.offdiag_energy - graph_offdiag).abs() < 1e-10,
            "{} vs {}",
            report.offdiag_energy,
            graph_offdiag
        );

        let orth = losses::orthogonality_loss(
            &mut g, streams.s_a, streams.p_a, streams.s_b, streams.p_b,
        )
        .unwrap();
        let graph_orth = g.scalar_value(orth);
        assert!(
            (report.orth_residual - graph_orth / 2.0).abs() < 1e-10,
            "{} vs {}",
            report.orth_residual,
            graph_orth / 2.0
        );
    }

    #[test]
    fn zeroed_private_output_layer_kills_orth_residual() {
        let (mut model, ds) = model_and_data(ModelVariant::Full, 50);
        let names: Vec<String> = model.store.names().to_vec();
        for (i, name) in names.iter().enumerate() {
            if name.contains(".private.layer1.") {
                let t = &mut model.store.tensors_mut()[i];
                for v in t.values_mut() {
                    *v = 0.0;
                }
            }
        }
        let report = diagnostics(&model, &ds).unwrap();
        assert_eq!(report.orth_residual, 0.0);
    }

    #[test]
    fn fresh_zero_gate_has_maximal_entropy() {
        let (model, ds) = model_and_data(ModelVariant::Full, 30);
        let report = diagnostics(&model, &ds).unwrap();
        let ln2 = 2.0_f64.ln();
        assert!(
            (report.gate_entropy - ln2).abs() < 1e-12,
            "zero-initialized gate must sit at the entropy ceiling, got {}",
            report.gate_entropy
        );
        assert!(report.gate_entropy <= ln2 + 1e-12);
    }

    #[test]
    fn multi_batch_run_reports_finite_nonnegative_fields() {
        let (model, ds) = model_and_data(ModelVariant::Full, 600);
        let r = diagnostics(&model, &ds).unwrap();
        for v in [
            r.offdiag_energy,
            r.diag_energy,
            r.orth_residual,
            r.gate_entropy,
            r.h_norm_a,
            r.h_norm_b,
        ] {
            assert!(v.is_finite() && v >= 0.0, "{r:?}");
        }
    }

    #[test]
    fn backbone_variant_is_rejected() {
        let (model, ds) = model_and_data(ModelVariant::Backbone, 20);
        assert!(diagnostics(&model, &ds).is_err());
    }
}
