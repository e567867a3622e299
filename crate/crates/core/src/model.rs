//! Whole-model assembly: encoders into a joint space, shared/private
//! decomposition, gated fusion, and the linear classifier, plus the wiring
//! from one forward pass to the combined training loss.
//!
//! Parameters are created in a fixed order so optimizer state and
//! checkpoints line up by index across runs of the same configuration.

use crate::autodiff::{Graph, Var};
use crate::dualstream::{self, GateParams, StreamHeads};
use crate::encoders::{self, Mlp};
use crate::error::{Error, Result};
use crate::losses::{
    self, LossComponents, LossReport, LossSettings, LossTerms, LossWeights,
};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which computation graph the model builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Decomposition, fusion, and the augmented classifier input.
    Full,
    /// Late fusion of the joint-space codes straight into the classifier;
    /// no stream heads, no gate.
    Backbone,
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelVariant::Full => "full",
            ModelVariant::Backbone => "backbone",
        })
    }
}

/// Architecture sizes and structural switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_dim_a: usize,
    pub input_dim_b: usize,
    /// Joint-space width `d`.
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    /// Hidden width of the residual and private stream heads.
    pub head_hidden: usize,
    pub num_classes: usize,
    /// Feed `[u | p_a | p_b]` to the classifier; `false` feeds `u` alone.
    pub use_private_in_head: bool,
    pub variant: ModelVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim_a: 20,
            input_dim_b: 20,
            embed_dim: 16,
            encoder_hidden: 128,
            head_hidden: 128,
            num_classes: 2,
            use_private_in_head: true,
            variant: ModelVariant::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim_a", self.input_dim_a),
            ("input_dim_b", self.input_dim_b),
            ("embed_dim", self.embed_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return Err(Error::config(format!("model {name} must be positive")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "model needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Width of the classifier input under this configuration.
    pub fn head_input_dim(&self) -> usize {
        match self.variant {
            ModelVariant::Backbone => 2 * self.embed_dim,
            ModelVariant::Full if self.use_private_in_head => 3 * self.embed_dim,
            ModelVariant::Full => self.embed_dim,
        }
    }
}

/// Stream-level graph handles from one forward pass of the full variant.
pub struct StreamVars {
    pub s_a: Var,
    pub p_a: Var,
    pub s_b: Var,
    pub p_b: Var,
    pub h_a: Var,
    pub h_b: Var,
    pub u: Var,
    pub alpha: Var,
}

/// Everything downstream code needs from one forward pass.
pub struct ForwardOutput {
    /// Joint-space codes `z_tilde`, `B x d` each.
    pub zt_a: Var,
    pub zt_b: Var,
    /// Present only for the full variant.
    pub streams: Option<StreamVars>,
    pub logits: Var,
}

/// The model: a parameter store plus the typed handles into it.
#[derive(Debug, Clone)]
pub struct DsrsdModel {
    pub store: ParamStore,
    pub config: ModelConfig,
    encoder_a: Mlp,
    encoder_b: Mlp,
    proj_a: ParamId,
    proj_b: ParamId,
    full: Option<FullParts>,
    cls_w: ParamId,
    cls_b: ParamId,
}

#[derive(Debug, Clone)]
struct FullParts {
    heads_a: StreamHeads,
    heads_b: StreamHeads,
    gate: GateParams,
}

impl DsrsdModel {
    /// Allocate all parameters. Creation order is part of the on-disk and
    /// optimizer contract: encoders, joint projections, stream heads, gate,
    /// classifier.
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<DsrsdModel> {
        config.validate()?;
        let d = config.embed_dim;
        let mut store = ParamStore::new();
        let encoder_a = Mlp::new(
            &mut store,
            rng,
            "encoder.a",
            &[config.input_dim_a, config.encoder_hidden, d],
        )?;
        let encoder_b = Mlp::new(
            &mut store,
            rng,
            "encoder.b",
            &[config.input_dim_b, config.encoder_hidden, d],
        )?;
        let proj_a = encoders::init_projection(&mut store, rng, "proj.a", d);
        let proj_b = encoders::init_projection(&mut store, rng, "proj.b", d);
        let full = match config.variant {
            ModelVariant::Backbone => None,
            ModelVariant::Full => {
                let heads_a = StreamHeads::new(&mut store, rng, "heads.a", d, config.head_hidden)?;
                let heads_b = StreamHeads::new(&mut store, rng, "heads.b", d, config.head_hidden)?;
                let gate = GateParams::new(&mut store, "gate", d);
                Some(FullParts {
                    heads_a,
                    heads_b,
                    gate,
                })
            }
        };
        let head_in = config.head_input_dim();
        let cls_w = store.add(
            "cls.w",
            crate::params::xavier_uniform(rng, head_in, config.num_classes),
        );
        let cls_b = store.add("cls.b", Tensor::zeros(1, config.num_classes));
        Ok(DsrsdModel {
            store,
            config,
            encoder_a,
            encoder_b,
            proj_a,
            proj_b,
            full,
            cls_w,
            cls_b,
        })
    }

    /// One forward pass over a batch already pushed into the graph.
    /// `train` enables dropout, drawing masks from `rng` in a fixed module
    /// order (encoder A, encoder B, heads A, heads B).
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x_a: Var,
        x_b: Var,
        train: bool,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<ForwardOutput> {
        if x_a.rows() != x_b.rows() {
            return Err(Error::data(format!(
                "modality batches disagree on size: {} vs {}",
                x_a.rows(),
                x_b.rows()
            )));
        }
        let z_a = self
            .encoder_a
            .forward(g, bound, x_a, train, dropout, rng)?;
        let z_b = self
            .encoder_b
            .forward(g, bound, x_b, train, dropout, rng)?;
        let zt_a = encoders::project(g, bound, self.proj_a, z_a)?;
        let zt_b = encoders::project(g, bound, self.proj_b, z_b)?;
        let (head_in, streams) = match &self.full {
            None => (g.concat_cols(&[zt_a, zt_b])?, None),
            Some(parts) => {
                let (s_a, p_a) =
                    dualstream::decompose(g, &parts.heads_a, bound, zt_a, train, dropout, rng)?;
                let (s_b, p_b) =
                    dualstream::decompose(g, &parts.heads_b, bound, zt_b, train, dropout, rng)?;
                let h_a = dualstream::project_shared(g, bound, &parts.heads_a, s_a)?;
                let h_b = dualstream::project_shared(g, bound, &parts.heads_b, s_b)?;
                let fused = dualstream::gated_fuse(g, &parts.gate, bound, h_a, h_b)?;
                let head_in = if self.config.use_private_in_head {
                    dualstream::augment(g, fused.u, p_a, p_b)?
                } else {
                    fused.u
                };
                let streams = StreamVars {
                    s_a,
                    p_a,
                    s_b,
                    p_b,
                    h_a,
                    h_b,
                    u: fused.u,
                    alpha: fused.alpha,
                };
                (head_in, Some(streams))
            }
        };
        let scores = g.matmul(head_in, bound.var(self.cls_w))?;
        let logits = g.add_row_bias(scores, bound.var(self.cls_b))?;
        Ok(ForwardOutput {
            zt_a,
            zt_b,
            streams,
            logits,
        })
    }
}

/// The combined objective for one batch: the differentiable total plus a
/// value-level report whose total matches it bit for bit.
pub struct ComposedLoss {
    pub total: Var,
    pub report: LossReport,
}

/// Build every active loss term on top of a forward pass. Terms with zero
/// weight are not built at all, so a zero-weight run is computationally
/// identical to one without the term. The decorrelation term is skipped
/// (and flagged) for single-sample batches, where covariance is undefined.
pub fn compose_training_loss(
    g: &mut Graph,
    out: &ForwardOutput,
    labels: &[usize],
    weights: &LossWeights,
    settings: &LossSettings,
) -> Result<ComposedLoss> {
    let batch = labels.len();
    let mut terms = LossTerms {
        con: None,
        align: None,
        dec: None,
        orth: None,
        task: losses::task_loss(g, out.logits, labels, settings.smoothing)?,
    };
    let mut dec_skipped = false;
    if let Some(streams) = &out.streams {
        if weights.con != 0.0 {
            terms.con = Some(losses::contrastive_loss(
                g,
                streams.h_a,
                streams.h_b,
                settings.tau,
                settings.symmetric_infonce,
            )?);
        }
        if weights.align != 0.0 {
            terms.align = Some(losses::alignment_loss(g, streams.h_a, streams.h_b)?);
        }
        if weights.dec != 0.0 {
            if batch < 2 {
                dec_skipped = true;
            } else {
                let c = losses::cross_covariance(g, streams.h_a, streams.h_b)?;
                terms.dec = Some(losses::decorrelation_loss(g, c)?);
            }
        }
        if weights.orth != 0.0 {
            terms.orth = Some(losses::orthogonality_loss(
                g,
                streams.s_a,
                streams.p_a,
                streams.s_b,
                streams.p_b,
            )?);
        }
    }
    let total = losses::total_loss(g, &terms, weights)?;
    let read = |term: Option<Var>| term.map_or(0.0, |v| g.scalar_value(v));
    let components = LossComponents {
        con: read(terms.con),
        align: read(terms.align),
        dec: read(terms.dec),
        orth: read(terms.orth),
        task: g.scalar_value(terms.task),
    };
    let report = losses::loss_report(components, *weights, dec_skipped)?;
    Ok(ComposedLoss {
        total,
        report,
    })
}
