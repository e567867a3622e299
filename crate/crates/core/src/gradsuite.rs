//! The named gradient-check suite: every differentiable primitive, each loss
//! term, and the full training objective, verified against central
//! differences. The CLI `grad-check` command and the test suite both run
//! these same cases.
//!
//! Each matrix-valued primitive is composed with a fixed random weighting of
//! its output (so every output coordinate influences the scalar
//! independently); loss cases and the objective are scalars already.

use crate::autodiff::{
    grad_check_with, GradCheckReport, Graph, Var, DEFAULT_EPSILON, DEFAULT_TOLERANCE,
};
use crate::error::Result;
use crate::losses::{self, LossSettings, LossWeights};
use crate::model::{self, DsrsdModel, ModelConfig, ModelVariant};
use crate::params::Bound;
use crate::rng::{self, tag};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One named check: a scalar-valued builder plus the points to probe at.
pub struct SuiteCase {
    name: &'static str,
    build: Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var> + Sync + Send>,
    points: Vec<Tensor>,
}

impl SuiteCase {
    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Number of scalar coordinates the central-difference probe visits.
    pub fn num_coords(&self) -> usize {
        self.points.iter().map(Tensor::len).sum()
    }

    /// Run with the default step and tolerance.
    pub fn run(&self) -> Result<GradCheckReport> {
        self.run_with(DEFAULT_EPSILON, DEFAULT_TOLERANCE, true)
    }

    pub fn run_with(
        &self,
        epsilon: f64,
        tolerance: f64,
        parallel_probes: bool,
    ) -> Result<GradCheckReport> {
        grad_check_with(
            self.name,
            self.build.as_ref(),
            &self.points,
            epsilon,
            tolerance,
            parallel_probes,
        )
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

/// Scalarize `out` as sum(out ⊙ w) with a fixed weight matrix, so that a
/// misplaced or dropped entry in a Jacobian cannot cancel out.
fn weighted(g: &mut Graph, out: Var, w: &Tensor) -> Var {
    let wc = g.constant(w.clone());
    let prod = g.elem_mul(out, wc).expect("weight shape");
    g.sum(prod)
}

/// One case per autodiff primitive, at shapes that catch transposition and
/// broadcasting mistakes.
pub fn primitive_cases(seed: u64) -> Vec<SuiteCase> {
    let mut r = rng::stream(seed, 0xC0FFEE);
    let mut cases: Vec<SuiteCase> = Vec::new();

    let a = uniform(&mut r, 3, 4, -2.0, 2.0);
    let b = uniform(&mut r, 4, 2, -2.0, 2.0);
    let w = uniform(&mut r, 3, 2, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "matmul",
        build: Box::new(move |g, v| {
            let out = g.matmul(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![a, b],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 4, 3, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "transpose",
        build: Box::new(move |g, v| {
            let out = g.transpose(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let y = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "add",
        build: Box::new(move |g, v| {
            let out = g.add(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x, y],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let y = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "sub",
        build: Box::new(move |g, v| {
            let out = g.sub(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x, y],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "scalar_mul",
        build: Box::new(move |g, v| {
            let out = g.scalar_mul(v[0], -1.37);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 5, 4, -2.0, 2.0);
    let bias = uniform(&mut r, 1, 4, -2.0, 2.0);
    let w = uniform(&mut r, 5, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "add_row_bias",
        build: Box::new(move |g, v| {
            let out = g.add_row_bias(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x, bias],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "square",
        build: Box::new(move |g, v| {
            let out = g.square(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let y = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "elem_mul",
        build: Box::new(move |g, v| {
            let out = g.elem_mul(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x, y],
    });

    let x = uniform(&mut r, 4, 3, -2.0, 2.0);
    let s = uniform(&mut r, 4, 1, -2.0, 2.0);
    let w = uniform(&mut r, 4, 3, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "row_scale",
        build: Box::new(move |g, v| {
            let out = g.row_scale(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x, s],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    cases.push(SuiteCase {
        name: "sum",
        build: Box::new(|g, v| Ok(g.sum(v[0]))),
        points: vec![x],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    cases.push(SuiteCase {
        name: "mean",
        build: Box::new(|g, v| Ok(g.mean(v[0]))),
        points: vec![x],
    });

    let x = uniform(&mut r, 4, 3, -2.0, 2.0);
    let w = uniform(&mut r, 4, 1, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "row_sum",
        build: Box::new(move |g, v| {
            let out = g.row_sum(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 4, 5, -2.0, 2.0);
    let w = uniform(&mut r, 4, 5, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "row_softmax",
        build: Box::new(move |g, v| {
            let out = g.row_softmax(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 4, 5, -2.0, 2.0);
    let w = uniform(&mut r, 4, 5, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "row_log_softmax",
        build: Box::new(move |g, v| {
            let out = g.row_log_softmax(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "gelu",
        build: Box::new(move |g, v| {
            let out = g.gelu(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 4, 6, -2.0, 2.0);
    let w = uniform(&mut r, 4, 6, -1.0, 1.0);
    let mask_seed = seed.wrapping_mul(31).wrapping_add(7);
    cases.push(SuiteCase {
        name: "dropout",
        build: Box::new(move |g, v| {
            // Fresh stream with a fixed key per case: every finite-difference
            // evaluation sees the same mask, so the function stays smooth.
            let mut mask_rng = rng::stream(mask_seed, 0xD60);
            let out = g.dropout(v[0], 0.4, &mut mask_rng)?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 4, 5, -2.0, 2.0);
    let w = uniform(&mut r, 4, 1, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "row_l2_norm",
        build: Box::new(move |g, v| {
            let out = g.row_l2_norm(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let a = uniform(&mut r, 4, 5, -2.0, 2.0);
    let b = uniform(&mut r, 3, 5, -2.0, 2.0);
    let w = uniform(&mut r, 4, 3, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "cosine_sim",
        build: Box::new(move |g, v| {
            let out = g.cosine_sim(v[0], v[1])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![a, b],
    });

    // Log needs a positive domain; keep well away from zero.
    let x = uniform(&mut r, 3, 4, 0.5, 2.5);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "log",
        build: Box::new(move |g, v| {
            let out = g.log(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let x = uniform(&mut r, 3, 4, -2.0, 2.0);
    let w = uniform(&mut r, 3, 4, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "exp",
        build: Box::new(move |g, v| {
            let out = g.exp(v[0]);
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    let a = uniform(&mut r, 3, 2, -2.0, 2.0);
    let b = uniform(&mut r, 3, 4, -2.0, 2.0);
    let c = uniform(&mut r, 3, 1, -2.0, 2.0);
    let w = uniform(&mut r, 3, 7, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "concat_cols",
        build: Box::new(move |g, v| {
            let out = g.concat_cols(&[v[0], v[1], v[2]])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![a, b, c],
    });

    let x = uniform(&mut r, 4, 4, -2.0, 2.0);
    let w = uniform(&mut r, 4, 1, -1.0, 1.0);
    cases.push(SuiteCase {
        name: "diag",
        build: Box::new(move |g, v| {
            let out = g.diag(v[0])?;
            Ok(weighted(g, out, &w))
        }),
        points: vec![x],
    });

    cases
}

/// One case per loss term, probed through the projections or logits that
/// feed it.
pub fn loss_cases(seed: u64) -> Vec<SuiteCase> {
    let mut r = rng::stream(seed, 0x105565);
    let mut cases: Vec<SuiteCase> = Vec::new();

    let h_a = uniform(&mut r, 5, 4, -2.0, 2.0);
    let h_b = uniform(&mut r, 5, 4, -2.0, 2.0);
    cases.push(SuiteCase {
        name: "contrastive loss",
        build: Box::new(|g, v| losses::contrastive_loss(g, v[0], v[1], 0.1, false)),
        points: vec![h_a.clone(), h_b.clone()],
    });
    cases.push(SuiteCase {
        name: "contrastive loss (symmetric)",
        build: Box::new(|g, v| losses::contrastive_loss(g, v[0], v[1], 0.1, true)),
        points: vec![h_a.clone(), h_b.clone()],
    });
    cases.push(SuiteCase {
        name: "alignment loss",
        build: Box::new(|g, v| losses::alignment_loss(g, v[0], v[1])),
        points: vec![h_a.clone(), h_b.clone()],
    });
    cases.push(SuiteCase {
        name: "decorrelation loss",
        build: Box::new(|g, v| {
            let c = losses::cross_covariance(g, v[0], v[1])?;
            losses::decorrelation_loss(g, c)
        }),
        points: vec![h_a, h_b],
    });

    let s_a = uniform(&mut r, 5, 4, -2.0, 2.0);
    let p_a = uniform(&mut r, 5, 4, -2.0, 2.0);
    let s_b = uniform(&mut r, 5, 4, -2.0, 2.0);
    let p_b = uniform(&mut r, 5, 4, -2.0, 2.0);
    cases.push(SuiteCase {
        name: "orthogonality loss",
        build: Box::new(|g, v| losses::orthogonality_loss(g, v[0], v[1], v[2], v[3])),
        points: vec![s_a, p_a, s_b, p_b],
    });

    let logits = uniform(&mut r, 6, 3, -2.0, 2.0);
    cases.push(SuiteCase {
        name: "task loss",
        build: Box::new(|g, v| losses::task_loss(g, v[0], &[0, 1, 2, 0, 1, 2], 0.05)),
        points: vec![logits],
    });

    cases
}

/// The full training objective at batch 8 and embedding width 6, with every
/// loss weight at its default, differentiated with respect to every
/// parameter tensor.
pub fn objective_case(seed: u64) -> SuiteCase {
    let mut r = rng::stream(seed, tag::INIT);
    let config = ModelConfig {
        input_dim_a: 7,
        input_dim_b: 9,
        embed_dim: 6,
        encoder_hidden: 8,
        head_hidden: 8,
        num_classes: 2,
        use_private_in_head: true,
        variant: ModelVariant::Full,
    };
    let model = DsrsdModel::new(config, &mut r).expect("suite model config is valid");
    let x_a = uniform(&mut r, 8, 7, -2.0, 2.0);
    let x_b = uniform(&mut r, 8, 9, -2.0, 2.0);
    let labels = [0, 1, 1, 0, 1, 0, 0, 1];
    let points = model.store.tensors().to_vec();
    SuiteCase {
        name: "full objective",
        build: Box::new(move |g, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            let xa = g.constant(x_a.clone());
            let xb = g.constant(x_b.clone());
            let mut dr = rng::stream(0, tag::DROPOUT);
            let out = model.forward(g, &bound, xa, xb, false, 0.0, &mut dr)?;
            let composed = model::compose_training_loss(
                g,
                &out,
                &labels,
                &LossWeights::default(),
                &LossSettings::default(),
            )?;
            Ok(composed.total)
        }),
        points,
    }
}

/// Every case: primitives, loss terms, then the full objective.
pub fn full_suite(seed: u64) -> Vec<SuiteCase> {
    let mut cases = primitive_cases(seed);
    cases.extend(loss_cases(seed));
    cases.push(objective_case(seed));
    cases
}

/// Run the whole suite in order and collect one report per case.
pub fn run_full_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    full_suite(seed).iter().map(SuiteCase::run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_suite_covers_primitives_losses_and_the_objective() {
        let cases = full_suite(0);
        assert_eq!(cases.len(), 22 + 6 + 1);
        let names: Vec<&str> = cases.iter().map(|c| c.name()).collect();
        assert!(names.contains(&"matmul"));
        assert!(names.contains(&"contrastive loss"));
        assert_eq!(*names.last().unwrap(), "full objective");
        let dupes = {
            let mut sorted = names.clone();
            sorted.sort_unstable();
            sorted.windows(2).any(|w| w[0] == w[1])
        };
        assert!(!dupes, "case names must be unique");
    }

    #[test]
    fn every_suite_case_passes_at_defaults() {
        for report in run_full_suite(11).unwrap() {
            assert!(
                report.passed(),
                "{}: max rel error {:.3e} at {:?}",
                report.name,
                report.max_error,
                report.worst
            );
        }
    }

    #[test]
    fn the_objective_case_probes_every_parameter_coordinate() {
        let case = objective_case(3);
        let report = case.run().unwrap();
        assert_eq!(report.num_coords, case.num_coords());
        assert!(case.num_coords() > 300, "suite model is too small to mean much");
    }
}
