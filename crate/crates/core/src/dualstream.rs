//! Shared/private decomposition and gated fusion.
//!
//! After projection, each modality's latent code `z_tilde` splits into two
//! streams: a shared stream `s = z_tilde + R(z_tilde)` built by a residual
//! head, and a private stream `p = P(z_tilde)`. Shared streams map through a
//! square projection `U` into the space where the contrastive and alignment
//! objectives act. A two-logit softmax gate mixes the projected shared
//! streams into one fused code `u`, and the classifier input augments `u`
//! with both private streams.

use crate::autodiff::{Graph, Var};
use crate::encoders::Mlp;
use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

/// Per-modality decomposition heads and the shared-space projection.
#[derive(Debug, Clone)]
pub struct StreamHeads {
    /// Residual head `R`: the shared stream is `z_tilde + R(z_tilde)`.
    pub residual: Mlp,
    /// Private head `P`.
    pub private: Mlp,
    /// Shared-space projection `U` (`d x d`, no bias).
    pub shared_proj: ParamId,
}

impl StreamHeads {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        d: usize,
        hidden: usize,
    ) -> Result<StreamHeads> {
        let residual = Mlp::new(store, rng, &format!("{prefix}.residual"), &[d, hidden, d])?;
        let private = Mlp::new(store, rng, &format!("{prefix}.private"), &[d, hidden, d])?;
        let shared_proj = store.add(
            format!("{prefix}.shared_proj"),
            crate::params::xavier_uniform(rng, d, d),
        );
        Ok(StreamHeads {
            residual,
            private,
            shared_proj,
        })
    }
}

/// Split `z_tilde` into the shared stream (residual form) and the private
/// stream. Returns `(s, p)`.
pub fn decompose(
    g: &mut Graph,
    heads: &StreamHeads,
    bound: &Bound,
    z_tilde: Var,
    train: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<(Var, Var)> {
    let r = heads
        .residual
        .forward(g, bound, z_tilde, train, dropout_rate, rng)?;
    let s = g.add(z_tilde, r)?;
    let p = heads
        .private
        .forward(g, bound, z_tilde, train, dropout_rate, rng)?;
    Ok((s, p))
}

/// Project a shared stream into the alignment space: `h = s U`.
pub fn project_shared(g: &mut Graph, bound: &Bound, heads: &StreamHeads, s: Var) -> Result<Var> {
    g.matmul(s, bound.var(heads.shared_proj))
}

/// Gate parameters: one logit vector per modality, stored `d x 1`.
/// Zero-initialized so fusion starts perfectly balanced.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub w_a: ParamId,
    pub w_b: ParamId,
}

impl GateParams {
    pub fn new(store: &mut ParamStore, prefix: &str, d: usize) -> GateParams {
        GateParams {
            w_a: store.add(format!("{prefix}.w_a"), Tensor::zeros(d, 1)),
            w_b: store.add(format!("{prefix}.w_b"), Tensor::zeros(d, 1)),
        }
    }
}

/// Output of the fusion gate.
pub struct Fused {
    /// Convex mix of the two projected shared streams, `B x d`.
    pub u: Var,
    /// Gate weights per sample, `B x 2`, rows on the simplex.
    pub alpha: Var,
}

/// Softmax-gated convex combination of the projected shared streams:
/// logits `(w_a . h_a_i, w_b . h_b_i)` per sample, then
/// `u_i = alpha_a_i h_a_i + alpha_b_i h_b_i`.
pub fn gated_fuse(
    g: &mut Graph,
    gate: &GateParams,
    bound: &Bound,
    h_a: Var,
    h_b: Var,
) -> Result<Fused> {
    let la = g.matmul(h_a, bound.var(gate.w_a))?;
    let lb = g.matmul(h_b, bound.var(gate.w_b))?;
    let logits = g.concat_cols(&[la, lb])?;
    let alpha = g.row_softmax(logits);
    let pick_a = g.constant(Tensor::from_rows(&[&[1.0], &[0.0]]).unwrap());
    let pick_b = g.constant(Tensor::from_rows(&[&[0.0], &[1.0]]).unwrap());
    let alpha_a = g.matmul(alpha, pick_a)?;
    let alpha_b = g.matmul(alpha, pick_b)?;
    let ua = g.row_scale(h_a, alpha_a)?;
    let ub = g.row_scale(h_b, alpha_b)?;
    let u = g.add(ua, ub)?;
    Ok(Fused { u, alpha })
}

/// Classifier input: fused shared code with both private streams appended,
/// `[u | p_a | p_b]`.
pub fn augment(g: &mut Graph, u: Var, p_a: Var, p_b: Var) -> Result<Var> {
    g.concat_cols(&[u, p_a, p_b])
}
