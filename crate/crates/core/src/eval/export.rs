//! Embedding export for external analysis.
//!
//! Writes one CSV row per sample with the fused representation and, on
//! request, the shared, private, and projected streams of both modalities.
//! Values use 17 significant digits so a reader recovers them bit-exactly.

use crate::autodiff::Graph;
use crate::data::MultimodalDataset;
use crate::error::{Error, Result};
use crate::eval::EVAL_BATCH_ROWS;
use crate::model::{DsrsdModel, ModelVariant};
use crate::rng::{self, tag};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// Which optional stream blocks to append after the fused columns.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportOptions {
    /// Shared streams `s_a_*`, `s_b_*`.
    pub shared: bool,
    /// Private streams `p_a_*`, `p_b_*`.
    pub private: bool,
    /// Projected streams `h_a_*`, `h_b_*`.
    pub projected: bool,
}

/// Write `sample_id, label, u_0..` rows for every sample, in dataset order,
/// with optional stream blocks chosen by `options`. Evaluation mode, so a
/// re-export is byte-identical.
pub fn export_embeddings(
    model: &DsrsdModel,
    dataset: &MultimodalDataset,
    options: ExportOptions,
    path: &Path,
) -> Result<()> {
    if model.config.variant != ModelVariant::Full {
        return Err(Error::config(
            "embedding export needs the dual-stream model; the backbone has no fused representation"
                .to_string(),
        ));
    }
    let d = model.config.embed_dim;
    let io_err = |source| Error::io(path.to_path_buf(), source);

    let mut out = Vec::new();
    write!(out, "sample_id,label").map_err(io_err)?;
    let block = |prefix: &str| (0..d).map(|j| format!(",{prefix}_{j}")).collect::<String>();
    write!(out, "{}", block("u")).map_err(io_err)?;
    if options.shared {
        write!(out, "{}{}", block("s_a"), block("s_b")).map_err(io_err)?;
    }
    if options.private {
        write!(out, "{}{}", block("p_a"), block("p_b")).map_err(io_err)?;
    }
    if options.projected {
        write!(out, "{}{}", block("h_a"), block("h_b")).map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;

    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(EVAL_BATCH_ROWS) {
        let (x_a, x_b, _) = dataset.gather(chunk);
        let mut g = Graph::new();
        let bound = model.store.bind_constant(&mut g);
        let xa = g.constant(x_a);
        let xb = g.constant(x_b);
        let mut unused = rng::stream(0, tag::DROPOUT);
        let fwd = model.forward(&mut g, &bound, xa, xb, false, 0.0, &mut unused)?;
        let streams = fwd.streams.as_ref().expect("full variant has streams");

        let u = g.value(streams.u);
        let mut blocks: Vec<&Tensor> = Vec::new();
        if options.shared {
            blocks.push(g.value(streams.s_a));
            blocks.push(g.value(streams.s_b));
        }
        if options.private {
            blocks.push(g.value(streams.p_a));
            blocks.push(g.value(streams.p_b));
        }
        if options.projected {
            blocks.push(g.value(streams.h_a));
            blocks.push(g.value(streams.h_b));
        }

        for (i, &sample_id) in chunk.iter().enumerate() {
            write!(out, "{sample_id},{}", dataset.labels[sample_id]).map_err(io_err)?;
            for &v in u.row(i) {
                write!(out, ",{v:.16e}").map_err(io_err)?;
            }
            for b in &blocks {
                for &v in b.row(i) {
                    write!(out, ",{v:.16e}").map_err(io_err)?;
                }
            }
            writeln!(out).map_err(io_err)?;
        }
    }
    std::fs::write(path, out).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{self, SyntheticSpec};
    use crate::model::ModelConfig;

    fn setup(n: usize, embed_dim: usize) -> (DsrsdModel, MultimodalDataset) {
        let config = ModelConfig {
            embed_dim,
            encoder_hidden: 8,
            head_hidden: 8,
            ..ModelConfig::default()
        };
        let model = DsrsdModel::new(config, &mut rng::stream(51, tag::INIT)).unwrap();
        let full = synthetic::generate(
            &SyntheticSpec {
                n: n.max(50),
                ..SyntheticSpec::default()
            },
            52,
        )
        .unwrap();
        let dataset = full.select(&(0..n).collect::<Vec<_>>());
        (model, dataset)
    }

    #[test]
    fn fused_only_export_has_id_label_and_d_columns() {
        let (model, dataset) = setup(3, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embed.csv");
        export_embeddings(&model, &dataset, ExportOptions::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "sample_id,label,u_0,u_1");
        for (i, line) in lines[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 4);
            assert_eq!(fields[0], i.to_string());
            assert_eq!(fields[1], dataset.labels[i].to_string());
        }
    }

    #[test]
    fn optional_blocks_extend_the_header_in_declared_order() {
        let (model, dataset) = setup(3, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embed.csv");
        let options = ExportOptions {
            shared: true,
            private: true,
            projected: true,
        };
        export_embeddings(&model, &dataset, options, &path).unwrap();
        let header = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(
            header,
            "sample_id,label,u_0,u_1,s_a_0,s_a_1,s_b_0,s_b_1,\
             p_a_0,p_a_1,p_b_0,p_b_1,h_a_0,h_a_1,h_b_0,h_b_1"
        );
    }

    #[test]
    fn re_export_is_byte_identical() {
        let (model, dataset) = setup(300, 4);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.csv");
        let p2 = dir.path().join("two.csv");
        let options = ExportOptions {
            shared: true,
            ..ExportOptions::default()
        };
        export_embeddings(&model, &dataset, options, &p1).unwrap();
        export_embeddings(&model, &dataset, options, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn written_fused_rows_round_trip_bit_exactly() {
        let (model, dataset) = setup(50, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embed.csv");
        export_embeddings(&model, &dataset, ExportOptions::default(), &path).unwrap();

        let (x_a, x_b, _) = dataset.gather(&(0..dataset.len()).collect::<Vec<_>>());
        let mut g = Graph::new();
        let bound = model.store.bind_constant(&mut g);
        let xa = g.constant(x_a);
        let xb = g.constant(x_b);
        let mut unused = rng::stream(0, tag::DROPOUT);
        let fwd = model
            .forward(&mut g, &bound, xa, xb, false, 0.0, &mut unused)
            .unwrap();
        let u = g.value(fwd.streams.as_ref().unwrap().u);

        let text = std::fs::read_to_string(&path).unwrap();
        for (i, line) in text.lines().skip(1).enumerate() {
            let parsed: Vec<f64> = line
                .split(',')
                .skip(2)
                .map(|f| f.parse().unwrap())
                .collect();
            assert_eq!(parsed.len(), 4);
            for (a, b) in parsed.iter().zip(u.row(i)) {
                assert_eq!(a.to_bits(), b.to_bits(), "row {i}");
            }
        }
    }

    #[test]
    fn backbone_models_cannot_export() {
        let (model, dataset) = setup(3, 2);
        let mut config = model.config.clone();
        config.variant = ModelVariant::Backbone;
        let backbone = DsrsdModel::new(config, &mut rng::stream(53, tag::INIT)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = export_embeddings(
            &backbone,
            &dataset,
            ExportOptions::default(),
            &dir.path().join("x.csv"),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
