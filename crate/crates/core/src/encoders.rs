//! Modality encoders: MLP backbones and the latent projection.
//!
//! Each modality owns a small MLP `f_m` that maps raw features to a latent
//! code `z`, followed by a square projection `W_m` (no bias) into the shared
//! width `d` where the dual-stream decomposition happens. Sequence-shaped
//! inputs are masked-mean-pooled over time first and then encoded like any
//! static feature vector.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{xavier_uniform, Bound, ParamId, ParamStore};
use crate::tensor::Tensor;
use rand::Rng;

/// One affine layer: `x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub w: ParamId,
    pub b: ParamId,
}

/// A GELU MLP. Hidden activations get dropout at train time; the final
/// layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Allocate Xavier-initialized parameters for the widths in `dims`
    /// (`[in, hidden..., out]`). At least one layer is required.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        prefix: &str,
        dims: &[usize],
    ) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(Error::config(format!(
                "mlp '{prefix}' needs at least [in, out] widths, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::config(format!(
                "mlp '{prefix}' has a zero width in {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = store.add(
                format!("{prefix}.layer{i}.w"),
                xavier_uniform(rng, fan_in, fan_out),
            );
            let b = store.add(format!("{prefix}.layer{i}.b"), Tensor::zeros(1, fan_out));
            layers.push(Layer { w, b });
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.get(self.layers[0].w).rows()
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        store.get(self.layers.last().unwrap().w).cols()
    }

    /// Run the MLP on a `B x in` batch. `dropout_rate > 0` only has effect
    /// when `train` is set; masks draw from `rng` in layer order.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        train: bool,
        dropout_rate: f64,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let prod = g.matmul(h, bound.var(layer.w))?;
            h = g.add_row_bias(prod, bound.var(layer.b))?;
            if i < last {
                h = g.gelu(h);
                if train {
                    h = g.dropout(h, dropout_rate, rng)?;
                }
            }
        }
        Ok(h)
    }
}

/// Encode a static feature batch: alias for the MLP forward pass, named for
/// call sites that read like the pipeline.
pub fn encode(
    g: &mut Graph,
    mlp: &Mlp,
    bound: &Bound,
    x: Var,
    train: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<Var> {
    mlp.forward(g, bound, x, train, dropout_rate, rng)
}

/// Ragged sequence batch: per sample a `T_i x D` step matrix and a validity
/// mask of the same length.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub samples: Vec<(Tensor, Vec<bool>)>,
}

impl SequenceBatch {
    /// Mean over valid steps, per sample. Invalid (padding) steps never
    /// enter the sum, so padding cannot perturb the result.
    pub fn mean_pool(&self) -> Result<Tensor> {
        let Some((first, _)) = self.samples.first() else {
            return Err(Error::data("empty sequence batch".to_string()));
        };
        let dim = first.cols();
        let mut pooled = Tensor::zeros(self.samples.len(), dim);
        for (i, (steps, mask)) in self.samples.iter().enumerate() {
            if steps.rows() != mask.len() {
                return Err(Error::data(format!(
                    "sample {i}: {} steps but {} mask entries",
                    steps.rows(),
                    mask.len()
                )));
            }
            if steps.cols() != dim {
                return Err(Error::data(format!(
                    "sample {i}: step width {} differs from {}",
                    steps.cols(),
                    dim
                )));
            }
            let mut count = 0usize;
            let row = pooled.row_mut(i);
            for (t, &valid) in mask.iter().enumerate() {
                if valid {
                    count += 1;
                    for (o, &s) in row.iter_mut().zip(steps.row(t)) {
                        *o += s;
                    }
                }
            }
            if count == 0 {
                return Err(Error::data(format!(
                    "sample {i} has no valid steps to pool"
                )));
            }
            for o in row.iter_mut() {
                *o /= count as f64;
            }
        }
        Ok(pooled)
    }
}

/// Pool a sequence batch over time and encode the result.
pub fn seq_encode(
    g: &mut Graph,
    mlp: &Mlp,
    bound: &Bound,
    batch: &SequenceBatch,
    train: bool,
    dropout_rate: f64,
    rng: &mut impl Rng,
) -> Result<Var> {
    let pooled = batch.mean_pool()?;
    let x = g.constant(pooled);
    mlp.forward(g, bound, x, train, dropout_rate, rng)
}

/// Allocate the square latent projection `W_m` (`d x d`, no bias).
pub fn init_projection(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    name: &str,
    d: usize,
) -> ParamId {
    store.add(name, xavier_uniform(rng, d, d))
}

/// Apply the latent projection: `z_tilde = z W_m`.
pub fn project(g: &mut Graph, bound: &Bound, w: ParamId, z: Var) -> Result<Var> {
    g.matmul(z, bound.var(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gelu_scalar, grad_check};
    use crate::rng;
    use crate::tensor::matmul;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn no_dropout_rng() -> ChaCha8Rng {
        rng::stream(0, 0)
    }

    fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| r.gen_range(-1.5..1.5))
    }

    #[test]
    fn single_layer_identity_weights_reproduce_input() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(1, rng::tag::INIT);
        let mlp = Mlp::new(&mut store, &mut r, "enc", &[3, 3]).unwrap();
        *store.get_mut(mlp.layers[0].w) = Tensor::identity(3);
        let x = Tensor::from_rows(&[&[1.0, -2.0, 0.5], &[0.0, 4.0, -1.0]]).unwrap();
        let mut g = Graph::new();
        let bound = store.bind_constant(&mut g);
        let xv = g.constant(x.clone());
        let out = mlp
            .forward(&mut g, &bound, xv, false, 0.0, &mut no_dropout_rng())
            .unwrap();
        assert_eq!(g.value(out), &x);
    }

    #[test]
    fn zero_weights_and_bias_give_zero_codes() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(2, rng::tag::INIT);
        let mlp = Mlp::new(&mut store, &mut r, "enc", &[4, 5, 3]).unwrap();
        for t in store.tensors_mut() {
            *t = Tensor::zeros(t.rows(), t.cols());
        }
        let mut g = Graph::new();
        let bound = store.bind_constant(&mut g);
        let xv = g.constant(uniform(&mut rng::stream(3, 9), 6, 4));
        let out = mlp
            .forward(&mut g, &bound, xv, false, 0.0, &mut no_dropout_rng())
            .unwrap();
        assert!(g.value(out).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_forward_matches_straight_line_oracle() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(5, rng::tag::INIT);
        let mlp = Mlp::new(&mut store, &mut r, "enc", &[4, 6, 3]).unwrap();
        let x = uniform(&mut rng::stream(6, 11), 7, 4);

        let mut g = Graph::new();
        let bound = store.bind_constant(&mut g);
        let xv = g.constant(x.clone());
        let out = mlp
            .forward(&mut g, &bound, xv, false, 0.0, &mut no_dropout_rng())
            .unwrap();
        let got = g.value(out);

        // Independent straight-line recomputation with plain matrix calls.
        let w1 = store.get(mlp.layers[0].w);
        let b1 = store.get(mlp.layers[0].b);
        let w2 = store.get(mlp.layers[1].w);
        let b2 = store.get(mlp.layers[1].b);
        let mut h = matmul(&x, w1).unwrap();
        for i in 0..h.rows() {
            for j in 0..h.cols() {
                let v = gelu_scalar(h.get(i, j) + b1.get(0, j));
                h.set(i, j, v);
            }
        }
        let mut expect = matmul(&h, w2).unwrap();
        for i in 0..expect.rows() {
            for j in 0..expect.cols() {
                let v = expect.get(i, j) + b2.get(0, j);
                expect.set(i, j, v);
            }
        }
        for (a, e) in got.values().iter().zip(expect.values()) {
            assert!((a - e).abs() < 1e-12, "forward {a} vs oracle {e}");
        }
    }

    #[test]
    fn encoder_parameters_pass_gradient_check() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(8, rng::tag::INIT);
        let mlp = Mlp::new(&mut store, &mut r, "enc", &[4, 5, 3]).unwrap();
        let x = uniform(&mut rng::stream(9, 13), 6, 4);
        let points: Vec<Tensor> = store.tensors().to_vec();
        let report = grad_check(
            "encoder",
            |g, vars| {
                let bound = Bound::from_vars(vars.to_vec());
                let xv = g.constant(x.clone());
                let out = mlp.forward(g, &bound, xv, false, 0.0, &mut no_dropout_rng())?;
                let sq = g.square(out);
                Ok(g.mean(sq))
            },
            &points,
        )
        .unwrap();
        assert!(
            report.passed(),
            "encoder grad check: max rel error {:.3e}",
            report.max_error
        );
    }

    #[test]
    fn pooling_a_single_step_equals_static_encode() {
        let step = Tensor::from_rows(&[&[0.5, -1.0, 2.0]]).unwrap();
        let batch = SequenceBatch {
            samples: vec![(step.clone(), vec![true])],
        };
        assert_eq!(batch.mean_pool().unwrap(), step);
    }

    #[test]
    fn pooling_equal_steps_returns_that_step_exactly() {
        let row = [1.25, -0.75, 3.5];
        let steps = Tensor::from_rows(&[&row, &row, &row, &row]).unwrap();
        let batch = SequenceBatch {
            samples: vec![(steps, vec![true; 4])],
        };
        assert_eq!(batch.mean_pool().unwrap().row(0), &row);
    }

    #[test]
    fn masked_mean_uses_only_valid_steps() {
        let steps = Tensor::from_rows(&[&[1.0, 0.0], &[9.0, 9.0], &[3.0, 0.0]]).unwrap();
        let batch = SequenceBatch {
            samples: vec![(steps, vec![true, false, true])],
        };
        assert_eq!(batch.mean_pool().unwrap().row(0), &[2.0, 0.0]);
    }

    #[test]
    fn padding_never_changes_the_pool() {
        let mut r = rng::stream(12, 17);
        let steps = uniform(&mut r, 3, 5);
        let short = SequenceBatch {
            samples: vec![(steps.clone(), vec![true, true, true])],
        };
        let mut padded_steps = Tensor::zeros(6, 5);
        for i in 0..3 {
            padded_steps.row_mut(i).copy_from_slice(steps.row(i));
        }
        for i in 3..6 {
            for j in 0..5 {
                padded_steps.set(i, j, 777.0);
            }
        }
        let padded = SequenceBatch {
            samples: vec![(padded_steps, vec![true, true, true, false, false, false])],
        };
        assert_eq!(
            short.mean_pool().unwrap().values(),
            padded.mean_pool().unwrap().values(),
            "padding steps leaked into the mean"
        );
    }

    #[test]
    fn all_padding_sample_is_rejected() {
        let batch = SequenceBatch {
            samples: vec![(Tensor::zeros(2, 3), vec![false, false])],
        };
        assert!(batch.mean_pool().is_err());
    }

    #[test]
    fn projection_has_no_bias_and_matches_matmul() {
        let mut store = ParamStore::new();
        let mut r = rng::stream(20, rng::tag::INIT);
        let w = init_projection(&mut store, &mut r, "proj_a", 4);
        let z = uniform(&mut rng::stream(21, 3), 5, 4);
        let mut g = Graph::new();
        let bound = store.bind_constant(&mut g);
        let zv = g.constant(z.clone());
        let out = project(&mut g, &bound, w, zv).unwrap();
        let expect = matmul(&z, store.get(w)).unwrap();
        assert_eq!(g.value(out), &expect);
    }
}
