//! Named parameter storage shared by the model and the optimizer.
//!
//! Parameters live outside any computation graph. Each training step binds
//! the store into a fresh [`Graph`] as variable leaves, runs forward and
//! backward, and reads the adjoints back out in store order. The insertion
//! order is fixed by model construction, which pins the layout of optimizer
//! state, gradient clipping, and the checkpoint blob.

use crate::autodiff::{Gradients, Graph, Var};
use crate::tensor::Tensor;
use rand::Rng;

/// Index of one parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let id = ParamId(self.tensors.len());
        self.tensors.push(tensor);
        self.names.push(name.into());
        id
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Number of parameter tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Register every tensor as a differentiable leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| graph.variable(t.clone()))
                .collect(),
        }
    }

    /// Register every tensor as a constant leaf; used on evaluation paths
    /// where no gradient is needed.
    pub fn bind_constant(&self, graph: &mut Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| graph.constant(t.clone()))
                .collect(),
        }
    }

    /// Replace every tensor with the same-shaped entries of `other`.
    pub fn restore_from(&mut self, other: &ParamStore) {
        debug_assert_eq!(self.tensors.len(), other.tensors.len());
        self.tensors.clone_from(&other.tensors);
    }
}

/// Graph handles for one binding of a [`ParamStore`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Build from raw graph handles in store order. The gradient-check
    /// harness uses this to drive model code with its own leaves.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Pull the adjoint of every parameter out of `grads`, in store order.
    /// Parameters the loss never touched get zero gradients.
    pub fn collect_grads(&self, store: &ParamStore, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(store.tensors.iter())
            .map(|(&v, t)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
            })
            .collect()
    }
}

/// Glorot uniform draw for a `fan_in x fan_out` weight matrix.
pub fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..limit))
}
