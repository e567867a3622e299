//! Primitive operations: forward construction and reverse-mode kernels.
//!
//! Forward methods live on [`Graph`] and validate shapes before computing.
//! Each op stores the input node indices it needs; `backprop` dispatches on
//! the op and pushes vector-Jacobian products into the input adjoints.
//! Adjoints accumulate additively, so fan-out falls out for free.

use super::{Graph, Node, Var};
use crate::error::{Error, Result};
use crate::tensor::{dot, matmul, Tensor};

/// 1 / sqrt(2 * pi)
const FRAC_1_SQRT_2PI: f64 = 0.39894228040143267793994605993438;

/// Standard normal CDF, written with the exact error function.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Exact GELU: x * Phi(x).
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub(crate) enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Transpose { a: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    ScalarMul { a: usize, c: f64 },
    AddRowBias { x: usize, bias: usize },
    Square { a: usize },
    ElemMul { a: usize, b: usize },
    RowScale { x: usize, s: usize },
    Sum { a: usize },
    Mean { a: usize },
    RowSum { a: usize },
    RowSoftmax { a: usize },
    RowLogSoftmax { a: usize },
    Gelu { a: usize },
    Dropout { a: usize, mask: Vec<f64> },
    RowL2Norm { a: usize },
    CosineSim { a: usize, b: usize },
    Log { a: usize },
    Exp { a: usize },
    ConcatCols { inputs: Vec<usize> },
    Diag { a: usize },
}

impl Graph {
    fn any_grad(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&id| self.requires_grad(id))
    }

    /// Matrix product `a * b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Op::MatMul { a: a.id, b: b.id }, value, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transposed();
        let rg = self.requires_grad(a.id);
        self.push(Op::Transpose { a: a.id }, value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Op::Add { a: a.id, b: b.id }, value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Op::Sub { a: a.id, b: b.id }, value, rg))
    }

    /// Multiply every entry by the constant `c`.
    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.requires_grad(a.id);
        self.push(Op::ScalarMul { a: a.id, c }, value, rg)
    }

    /// Add a `1 x d` bias to every row of a `B x d` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        if bias.rows() != 1 || bias.cols() != x.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row_bias",
                left_rows: x.rows(),
                left_cols: x.cols(),
                right_rows: bias.rows(),
                right_cols: bias.cols(),
            });
        }
        let xv = self.value(x);
        let bv = self.value(bias);
        let mut value = xv.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            for (o, &b) in row.iter_mut().zip(bv.values().iter()) {
                *o += b;
            }
        }
        let rg = self.any_grad(&[x.id, bias.id]);
        Ok(self.push(
            Op::AddRowBias {
                x: x.id,
                bias: bias.id,
            },
            value,
            rg,
        ))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.requires_grad(a.id);
        self.push(Op::Square { a: a.id }, value, rg)
    }

    /// Entrywise product of two same-shape matrices.
    pub fn elem_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Op::ElemMul { a: a.id, b: b.id }, value, rg))
    }

    /// Scale row i of `x` by the scalar in row i of the `B x 1` column `s`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        if s.rows() != x.rows() || s.cols() != 1 {
            return Err(Error::ShapeMismatch {
                op: "row_scale",
                left_rows: x.rows(),
                left_cols: x.cols(),
                right_rows: s.rows(),
                right_cols: s.cols(),
            });
        }
        let xv = self.value(x);
        let sv = self.value(s);
        let mut value = xv.clone();
        for i in 0..value.rows() {
            let scale = sv.get(i, 0);
            for o in value.row_mut(i) {
                *o *= scale;
            }
        }
        let rg = self.any_grad(&[x.id, s.id]);
        Ok(self.push(Op::RowScale { x: x.id, s: s.id }, value, rg))
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.value(a).values().iter().sum();
        let rg = self.requires_grad(a.id);
        self.push(Op::Sum { a: a.id }, Tensor::scalar(total), rg)
    }

    /// Mean of all entries, as a 1x1 tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let total: f64 = v.values().iter().sum();
        let value = Tensor::scalar(total / v.len() as f64);
        let rg = self.requires_grad(a.id);
        self.push(Op::Mean { a: a.id }, value, rg)
    }

    /// Per-row sum: `B x n` to `B x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Tensor::from_fn(v.rows(), 1, |i, _| v.row(i).iter().sum());
        let rg = self.requires_grad(a.id);
        self.push(Op::RowSum { a: a.id }, value, rg)
    }

    /// Numerically stable softmax along each row.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut value = v.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for o in row.iter_mut() {
                *o = (*o - max).exp();
                denom += *o;
            }
            for o in row.iter_mut() {
                *o /= denom;
            }
        }
        let rg = self.requires_grad(a.id);
        self.push(Op::RowSoftmax { a: a.id }, value, rg)
    }

    /// Numerically stable log-softmax along each row.
    pub fn row_log_softmax(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut value = v.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + row
                    .iter()
                    .map(|&x| (x - max).exp())
                    .sum::<f64>()
                    .ln();
            for o in row.iter_mut() {
                *o -= lse;
            }
        }
        let rg = self.requires_grad(a.id);
        self.push(Op::RowLogSoftmax { a: a.id }, value, rg)
    }

    /// Exact GELU, `x * Phi(x)` with the error-function CDF.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu_scalar);
        let rg = self.requires_grad(a.id);
        self.push(Op::Gelu { a: a.id }, value, rg)
    }

    /// Inverted dropout: zero each entry with probability `rate` and scale
    /// survivors by `1 / (1 - rate)`. The mask is drawn here, row-major, one
    /// uniform draw per entry. `rate == 0` is an exact no-op that records
    /// nothing and consumes no randomness.
    pub fn dropout(
        &mut self,
        a: Var,
        rate: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - rate);
        let v = self.value(a);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    0.0
                } else {
                    scale
                }
            })
            .collect();
        let data: Vec<f64> = v
            .values()
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| x * m)
            .collect();
        let value = Tensor::from_vec(v.rows(), v.cols(), data)?;
        let rg = self.requires_grad(a.id);
        Ok(self.push(Op::Dropout { a: a.id, mask }, value, rg))
    }

    /// Euclidean norm of each row: `B x d` to `B x 1`.
    pub fn row_l2_norm(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Tensor::from_fn(v.rows(), 1, |i, _| dot(v.row(i), v.row(i)).sqrt());
        let rg = self.requires_grad(a.id);
        self.push(Op::RowL2Norm { a: a.id }, value, rg)
    }

    /// All-pairs cosine similarity of the rows of `a` and `b`:
    /// out[i][j] = cos(a_i, b_j). Zero-norm rows are a numerical-domain
    /// error because the cosine is undefined there.
    pub fn cosine_sim(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.cols() != b.cols() {
            return Err(Error::ShapeMismatch {
                op: "cosine_sim",
                left_rows: a.rows(),
                left_cols: a.cols(),
                right_rows: b.rows(),
                right_cols: b.cols(),
            });
        }
        let av = self.value(a);
        let bv = self.value(b);
        let a_norms = row_norms_checked("cosine_sim", "left", av)?;
        let b_norms = row_norms_checked("cosine_sim", "right", bv)?;
        let mut value = Tensor::zeros(av.rows(), bv.rows());
        for i in 0..av.rows() {
            let ai = av.row(i);
            for j in 0..bv.rows() {
                let s = dot(ai, bv.row(j)) / (a_norms[i] * b_norms[j]);
                value.set(i, j, s);
            }
        }
        let rg = self.any_grad(&[a.id, b.id]);
        Ok(self.push(Op::CosineSim { a: a.id, b: b.id }, value, rg))
    }

    /// Natural log, entrywise. Domain errors surface as non-finite values.
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let rg = self.requires_grad(a.id);
        self.push(Op::Log { a: a.id }, value, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.requires_grad(a.id);
        self.push(Op::Exp { a: a.id }, value, rg)
    }

    /// Concatenate matrices side by side. All operands share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::config("concat_cols needs at least one operand".to_string()));
        };
        let rows = first.rows();
        let total_cols: usize = parts.iter().map(|p| p.cols()).sum();
        for p in parts {
            if p.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left_rows: rows,
                    left_cols: first.cols(),
                    right_rows: p.rows(),
                    right_cols: p.cols(),
                });
            }
        }
        let mut value = Tensor::zeros(rows, total_cols);
        for i in 0..rows {
            let out_row = value.row_mut(i);
            let mut offset = 0;
            for p in parts {
                let src = self.nodes[p.id].value.row(i);
                out_row[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.any_grad(&ids);
        Ok(self.push(Op::ConcatCols { inputs: ids }, value, rg))
    }

    /// Main diagonal of a square matrix, as an `n x 1` column.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        if a.rows() != a.cols() {
            return Err(Error::ShapeMismatch {
                op: "diag",
                left_rows: a.rows(),
                left_cols: a.cols(),
                right_rows: a.rows(),
                right_cols: a.rows(),
            });
        }
        let v = self.value(a);
        let value = Tensor::from_fn(v.rows(), 1, |i, _| v.get(i, i));
        let rg = self.requires_grad(a.id);
        Ok(self.push(Op::Diag { a: a.id }, value, rg))
    }
}

fn row_norms_checked(op: &'static str, side: &'static str, t: &Tensor) -> Result<Vec<f64>> {
    let mut norms = Vec::with_capacity(t.rows());
    for i in 0..t.rows() {
        let n = dot(t.row(i), t.row(i)).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNormRow { op, side, row: i });
        }
        norms.push(n);
    }
    Ok(norms)
}

fn accum(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, delta: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(g) => g.add_scaled(&delta, 1.0),
        slot @ None => *slot = Some(delta),
    }
}

/// Push the vector-Jacobian product of node `id` into its inputs' adjoints.
pub(crate) fn backprop(
    nodes: &[Node],
    id: usize,
    grad: &Tensor,
    grads: &mut [Option<Tensor>],
) -> Result<()> {
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            if nodes[*a].requires_grad {
                let bt = nodes[*b].value.transposed();
                accum(nodes, grads, *a, matmul(grad, &bt)?);
            }
            if nodes[*b].requires_grad {
                let at = nodes[*a].value.transposed();
                accum(nodes, grads, *b, matmul(&at, grad)?);
            }
        }
        Op::Transpose { a } => {
            accum(nodes, grads, *a, grad.transposed());
        }
        Op::Add { a, b } => {
            accum(nodes, grads, *a, grad.clone());
            accum(nodes, grads, *b, grad.clone());
        }
        Op::Sub { a, b } => {
            accum(nodes, grads, *a, grad.clone());
            accum(nodes, grads, *b, grad.map(|g| -g));
        }
        Op::ScalarMul { a, c } => {
            accum(nodes, grads, *a, grad.map(|g| c * g));
        }
        Op::AddRowBias { x, bias } => {
            accum(nodes, grads, *x, grad.clone());
            if nodes[*bias].requires_grad {
                let mut col_sums = Tensor::zeros(1, grad.cols());
                for i in 0..grad.rows() {
                    for (o, &g) in col_sums.values_mut().iter_mut().zip(grad.row(i)) {
                        *o += g;
                    }
                }
                accum(nodes, grads, *bias, col_sums);
            }
        }
        Op::Square { a } => {
            let x = &nodes[*a].value;
            let delta = x.zip_map(grad, |xv, g| 2.0 * xv * g)?;
            accum(nodes, grads, *a, delta);
        }
        Op::ElemMul { a, b } => {
            if nodes[*a].requires_grad {
                let delta = nodes[*b].value.zip_map(grad, |bv, g| bv * g)?;
                accum(nodes, grads, *a, delta);
            }
            if nodes[*b].requires_grad {
                let delta = nodes[*a].value.zip_map(grad, |av, g| av * g)?;
                accum(nodes, grads, *b, delta);
            }
        }
        Op::RowScale { x, s } => {
            let xv = &nodes[*x].value;
            let sv = &nodes[*s].value;
            if nodes[*x].requires_grad {
                let mut delta = grad.clone();
                for i in 0..delta.rows() {
                    let scale = sv.get(i, 0);
                    for o in delta.row_mut(i) {
                        *o *= scale;
                    }
                }
                accum(nodes, grads, *x, delta);
            }
            if nodes[*s].requires_grad {
                let delta = Tensor::from_fn(sv.rows(), 1, |i, _| dot(grad.row(i), xv.row(i)));
                accum(nodes, grads, *s, delta);
            }
        }
        Op::Sum { a } => {
            let g = grad.item();
            let (r, c) = nodes[*a].value.shape();
            accum(nodes, grads, *a, Tensor::filled(r, c, g));
        }
        Op::Mean { a } => {
            let (r, c) = nodes[*a].value.shape();
            let g = grad.item() / (r * c) as f64;
            accum(nodes, grads, *a, Tensor::filled(r, c, g));
        }
        Op::RowSum { a } => {
            let (r, c) = nodes[*a].value.shape();
            let delta = Tensor::from_fn(r, c, |i, _| grad.get(i, 0));
            accum(nodes, grads, *a, delta);
        }
        Op::RowSoftmax { a } => {
            let y = &nodes[id].value;
            let mut delta = Tensor::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let yi = y.row(i);
                let gi = grad.row(i);
                let inner = dot(gi, yi);
                for (j, o) in delta.row_mut(i).iter_mut().enumerate() {
                    *o = yi[j] * (gi[j] - inner);
                }
            }
            accum(nodes, grads, *a, delta);
        }
        Op::RowLogSoftmax { a } => {
            let y = &nodes[id].value;
            let mut delta = Tensor::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let yi = y.row(i);
                let gi = grad.row(i);
                let g_total: f64 = gi.iter().sum();
                for (j, o) in delta.row_mut(i).iter_mut().enumerate() {
                    *o = gi[j] - yi[j].exp() * g_total;
                }
            }
            accum(nodes, grads, *a, delta);
        }
        Op::Gelu { a } => {
            let x = &nodes[*a].value;
            let delta = x.zip_map(grad, |xv, g| {
                g * (std_normal_cdf(xv) + xv * std_normal_pdf(xv))
            })?;
            accum(nodes, grads, *a, delta);
        }
        Op::Dropout { a, mask } => {
            let mut delta = grad.clone();
            for (o, &m) in delta.values_mut().iter_mut().zip(mask.iter()) {
                *o *= m;
            }
            accum(nodes, grads, *a, delta);
        }
        Op::RowL2Norm { a } => {
            let x = &nodes[*a].value;
            let norms = &nodes[id].value;
            let mut delta = Tensor::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                let n = norms.get(i, 0);
                if n == 0.0 {
                    continue;
                }
                let g = grad.get(i, 0) / n;
                for (o, &xv) in delta.row_mut(i).iter_mut().zip(x.row(i)) {
                    *o = g * xv;
                }
            }
            accum(nodes, grads, *a, delta);
        }
        Op::CosineSim { a, b } => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let s = &nodes[id].value;
            let a_norms: Vec<f64> = (0..av.rows())
                .map(|i| dot(av.row(i), av.row(i)).sqrt())
                .collect();
            let b_norms: Vec<f64> = (0..bv.rows())
                .map(|j| dot(bv.row(j), bv.row(j)).sqrt())
                .collect();
            if nodes[*a].requires_grad {
                let mut delta = Tensor::zeros(av.rows(), av.cols());
                for i in 0..av.rows() {
                    let ai = av.row(i);
                    let na = a_norms[i];
                    let out = delta.row_mut(i);
                    for j in 0..bv.rows() {
                        let g = grad.get(i, j);
                        if g == 0.0 {
                            continue;
                        }
                        let coeff_b = g / (na * b_norms[j]);
                        let coeff_a = g * s.get(i, j) / (na * na);
                        for ((o, &bj), &aiv) in out.iter_mut().zip(bv.row(j)).zip(ai.iter()) {
                            *o += coeff_b * bj - coeff_a * aiv;
                        }
                    }
                }
                accum(nodes, grads, *a, delta);
            }
            if nodes[*b].requires_grad {
                let mut delta = Tensor::zeros(bv.rows(), bv.cols());
                for j in 0..bv.rows() {
                    let bj = bv.row(j);
                    let nb = b_norms[j];
                    let out = delta.row_mut(j);
                    for i in 0..av.rows() {
                        let g = grad.get(i, j);
                        if g == 0.0 {
                            continue;
                        }
                        let coeff_a = g / (a_norms[i] * nb);
                        let coeff_b = g * s.get(i, j) / (nb * nb);
                        for ((o, &ai), &bjv) in out.iter_mut().zip(av.row(i)).zip(bj.iter()) {
                            *o += coeff_a * ai - coeff_b * bjv;
                        }
                    }
                }
                accum(nodes, grads, *b, delta);
            }
        }
        Op::Log { a } => {
            let x = &nodes[*a].value;
            let delta = x.zip_map(grad, |xv, g| g / xv)?;
            accum(nodes, grads, *a, delta);
        }
        Op::Exp { a } => {
            let y = &nodes[id].value;
            let delta = y.zip_map(grad, |yv, g| yv * g)?;
            accum(nodes, grads, *a, delta);
        }
        Op::ConcatCols { inputs } => {
            let mut offset = 0;
            for &input in inputs {
                let (r, c) = nodes[input].value.shape();
                if nodes[input].requires_grad {
                    let mut delta = Tensor::zeros(r, c);
                    for i in 0..r {
                        delta
                            .row_mut(i)
                            .copy_from_slice(&grad.row(i)[offset..offset + c]);
                    }
                    accum(nodes, grads, input, delta);
                }
                offset += c;
            }
        }
        Op::Diag { a } => {
            let n = nodes[*a].value.rows();
            let mut delta = Tensor::zeros(n, n);
            for i in 0..n {
                delta.set(i, i, grad.get(i, 0));
            }
            accum(nodes, grads, *a, delta);
        }
    }
    Ok(())
}
