//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] is a write-once tape: every operation appends a node holding
//! the computed value and the indices of its inputs. [`Graph::backward`]
//! consumes the graph, replays the tape in reverse and accumulates adjoints
//! into every leaf that was registered with [`Graph::variable`]. Consuming
//! the graph makes a second backward pass a compile error rather than a
//! silent wrong answer.
//!
//! The primitive set is exactly what the dual-stream model needs: affine
//! maps, GELU, dropout, row softmax and log-softmax, cosine similarity,
//! reductions, and column concatenation. Each primitive has a hand-written
//! vector-Jacobian product in [`ops`], and all of them are exercised by the
//! central-difference harness in [`gradcheck`].

mod gradcheck;
mod ops;

pub use gradcheck::{
    grad_check, grad_check_with, relative_error, GradCheckReport, DEFAULT_EPSILON,
    DEFAULT_TOLERANCE,
};
pub use ops::{gelu_scalar, std_normal_cdf, std_normal_pdf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) use ops::Op;

/// Handle to a node in a [`Graph`]. Carries its shape for early checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub(crate) struct Node {
    pub op: Op,
    pub value: Tensor,
    pub requires_grad: bool,
}

/// Write-once computation tape.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Register a tensor that does not participate in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Register a tensor whose gradient will be available after backward.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Value computed for `v`.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.id].value
    }

    /// Value of a 1x1 node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.id].value.item()
    }

    pub(crate) fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        let (rows, cols) = value.shape();
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var { id, rows, cols }
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    /// Reverse pass from a scalar loss. Consumes the graph; the returned map
    /// holds one adjoint per `variable` leaf reachable from `loss`.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if loss.shape() != (1, 1) {
            return Err(Error::config(format!(
                "backward needs a 1x1 loss node, got {}x{}",
                loss.rows, loss.cols
            )));
        }
        if !self.nodes[loss.id].requires_grad {
            return Err(Error::config(
                "backward on a loss that depends on no variable leaf".to_string(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            // Taking the adjoint frees intermediate storage as we walk back.
            let Some(grad) = grads[id].take() else {
                continue;
            };
            ops::backprop(&self.nodes, id, &grad, &mut grads)?;
        }
        Ok(Gradients { grads })
    }
}

/// Adjoints produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the leaf behind `v`, if any path
    /// reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but moves the tensor out.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}
