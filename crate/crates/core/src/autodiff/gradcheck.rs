//! Central-difference gradient verification.
//!
//! `grad_check` treats the supplied builder as a black-box scalar function of
//! its input tensors, compares the reverse-mode gradient against a symmetric
//! finite difference at every coordinate, and reports the worst relative
//! error. The probe loop is data parallel: each coordinate rebuilds the graph
//! twice on its own, so probes never share state.

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Coordinates with both gradients below this magnitude compare by absolute
/// difference instead of relative, so a zero gradient does not divide by zero.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    /// Total number of scalar coordinates probed.
    pub num_coords: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// (input index, row, col, analytic, numeric) behind `max_error`.
    pub worst: Option<(usize, usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_error.is_finite() && self.max_error < self.tolerance
    }
}

/// Check the reverse-mode gradient of `f` at `points` with defaults.
pub fn grad_check<F>(name: &str, f: F, points: &[Tensor]) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync + Send,
{
    grad_check_with(name, f, points, DEFAULT_EPSILON, DEFAULT_TOLERANCE, true)
}

/// Full-control variant: explicit step, tolerance, and probe parallelism.
pub fn grad_check_with<F>(
    name: &str,
    f: F,
    points: &[Tensor],
    epsilon: f64,
    tolerance: f64,
    parallel_probes: bool,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync + Send,
{
    // Reverse-mode gradients, one pass.
    let mut graph = Graph::new();
    let vars: Vec<Var> = points.iter().map(|t| graph.variable(t.clone())).collect();
    let loss = f(&mut graph, &vars)?;
    if loss.shape() != (1, 1) {
        return Err(Error::config(format!(
            "grad_check '{name}' needs a scalar function, got a {}x{} output",
            loss.rows(),
            loss.cols()
        )));
    }
    let mut grads = graph.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(points.iter())
        .map(|(&v, p)| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();

    // Symmetric difference probe per coordinate.
    let coords: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |k| (p, k)))
        .collect();
    let num_coords = coords.len();
    let probe = |(p, k): (usize, usize)| -> Result<f64> {
        let mut shifted: Vec<Tensor> = points.to_vec();
        let base = shifted[p].values()[k];
        shifted[p].values_mut()[k] = base + epsilon;
        let up = eval_scalar(&f, &shifted)?;
        shifted[p].values_mut()[k] = base - epsilon;
        let down = eval_scalar(&f, &shifted)?;
        Ok((up - down) / (2.0 * epsilon))
    };
    let numeric: Vec<Result<f64>> = if parallel_probes {
        parallel::par_map(coords.clone(), probe)
    } else {
        coords.iter().cloned().map(probe).collect()
    };

    let mut report = GradCheckReport {
        name: name.to_string(),
        num_coords,
        max_error: 0.0,
        tolerance,
        worst: None,
    };
    for ((p, k), numeric) in coords.into_iter().zip(numeric) {
        let n = numeric?;
        let a = analytic[p].values()[k];
        let err = relative_error(a, n);
        if err > report.max_error || report.worst.is_none() {
            let cols = points[p].cols();
            report.max_error = err;
            report.worst = Some((p, k / cols, k % cols, a, n));
        }
    }
    Ok(report)
}

fn eval_scalar<F>(f: &F, points: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = points.iter().map(|t| graph.variable(t.clone())).collect();
    let loss = f(&mut graph, &vars)?;
    Ok(graph.scalar_value(loss))
}

/// |a - n| scaled by the larger magnitude, with an absolute floor for
/// near-zero gradients.
pub fn relative_error(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    let denom = a.abs().max(n.abs());
    if denom > REL_FLOOR {
        diff / denom
    } else {
        diff
    }
}
