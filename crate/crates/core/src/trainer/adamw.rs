//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Per-parameter moment estimates and the shared optimizer constants.
pub struct OptimizerState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    /// Zeroed moments shaped after `store`, standard Adam constants.
    pub fn new(store: &ParamStore, weight_decay: f64) -> OptimizerState {
        let zeros: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update: decoupled decay `p -= lr * wd * p` first, then the
/// bias-corrected Adam delta.
pub fn adamw_step(
    store: &mut ParamStore,
    grads: &[Tensor],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if grads.len() != store.len() {
        return Err(Error::config(format!(
            "{} gradients for {} parameters",
            grads.len(),
            store.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for (i, p) in store.tensors_mut().iter_mut().enumerate() {
        let g = &grads[i];
        if g.shape() != p.shape() {
            return Err(Error::config(format!(
                "gradient {i} is {:?}, parameter is {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (((pv, gv), mv), vv) in p
            .values_mut()
            .iter_mut()
            .zip(g.values())
            .zip(m.values_mut())
            .zip(v.values_mut())
        {
            *pv -= lr * state.weight_decay * *pv;
            *mv = state.beta1 * *mv + (1.0 - state.beta1) * gv;
            *vv = state.beta2 * *vv + (1.0 - state.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Scale all gradients so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm. A non-finite norm is an abort-step signal.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &v in g.values() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::numerical(format!(
            "gradient norm is {norm}; step aborted"
        )));
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.values_mut() {
                *v *= scale;
            }
        }
    }
    Ok(norm)
}

/// Global L2 norm of a gradient list.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.values())
        .map(|&v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::from_vec(1, values.len(), values.to_vec()).unwrap());
        s
    }

    #[test]
    fn zero_grad_zero_decay_leaves_parameters_alone() {
        let mut store = store_with(&[1.5, -2.0]);
        let mut state = OptimizerState::new(&store, 0.0);
        let grads = vec![Tensor::zeros(1, 2)];
        for _ in 0..3 {
            adamw_step(&mut store, &grads, &mut state, 1e-3).unwrap();
        }
        assert_eq!(store.tensors()[0].values(), &[1.5, -2.0]);
        assert_eq!(state.step_count(), 3);
    }

    #[test]
    fn first_step_is_a_signed_unit_step_times_lr() {
        // Bias correction makes m_hat = g and v_hat = g^2 on step one, so
        // the delta is -lr * g / (|g| + eps), essentially -lr * sign(g).
        let mut store = store_with(&[0.0, 0.0]);
        let mut state = OptimizerState::new(&store, 0.0);
        let grads = vec![Tensor::from_vec(1, 2, vec![0.3, -7.0]).unwrap()];
        let lr = 1e-2;
        adamw_step(&mut store, &grads, &mut state, lr).unwrap();
        let p = store.tensors()[0].values();
        assert!((p[0] + lr).abs() < lr * 1e-4, "{}", p[0]);
        assert!((p[1] - lr).abs() < lr * 1e-4, "{}", p[1]);
    }

    #[test]
    fn pure_decay_shrinks_exactly_as_written() {
        let mut store = store_with(&[2.0]);
        let mut state = OptimizerState::new(&store, 0.1);
        let grads = vec![Tensor::zeros(1, 1)];
        let lr = 0.5;
        adamw_step(&mut store, &grads, &mut state, lr).unwrap();
        let expected = 2.0 - lr * 0.1 * 2.0;
        assert_eq!(store.tensors()[0].values()[0].to_bits(), expected.to_bits());
    }

    #[test]
    fn moments_track_the_adam_recurrence() {
        let mut store = store_with(&[0.0]);
        let mut state = OptimizerState::new(&store, 0.0);
        let g1 = vec![Tensor::from_vec(1, 1, vec![2.0]).unwrap()];
        let g2 = vec![Tensor::from_vec(1, 1, vec![-1.0]).unwrap()];
        adamw_step(&mut store, &g1, &mut state, 0.0).unwrap();
        adamw_step(&mut store, &g2, &mut state, 0.0).unwrap();
        // Textbook recurrence by hand.
        let m = 0.9 * (0.1 * 2.0) + 0.1 * (-1.0);
        let v = 0.999 * (0.001 * 4.0) + 0.001 * 1.0;
        assert!((state.m[0].values()[0] - m).abs() < 1e-15);
        assert!((state.v[0].values()[0] - v).abs() < 1e-15);
    }

    #[test]
    fn mismatched_gradients_are_rejected() {
        let mut store = store_with(&[1.0]);
        let mut state = OptimizerState::new(&store, 0.0);
        assert!(adamw_step(&mut store, &[], &mut state, 1e-3).is_err());
        let wrong = vec![Tensor::zeros(2, 2)];
        assert!(adamw_step(&mut store, &wrong, &mut state, 1e-3).is_err());
    }

    #[test]
    fn small_gradients_pass_through_clipping_untouched() {
        let mut grads = vec![Tensor::from_vec(1, 2, vec![3.0, 4.0]).unwrap()];
        let norm = clip_gradients(&mut grads, 5.0).unwrap();
        assert_eq!(norm, 5.0, "norm sits exactly on the boundary");
        assert_eq!(grads[0].values(), &[3.0, 4.0], "boundary case unchanged");

        let mut tiny = vec![Tensor::from_vec(1, 2, vec![1.0, 1.0]).unwrap()];
        clip_gradients(&mut tiny, 5.0).unwrap();
        assert_eq!(tiny[0].values(), &[1.0, 1.0]);
    }

    #[test]
    fn oversized_gradients_scale_onto_the_ball() {
        let mut grads = vec![Tensor::from_vec(1, 2, vec![6.0, 8.0]).unwrap()];
        let norm = clip_gradients(&mut grads, 5.0).unwrap();
        assert_eq!(norm, 10.0);
        assert_eq!(grads[0].values(), &[3.0, 4.0]);
        assert!((global_norm(&grads) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_signals_an_aborted_step() {
        let mut grads = vec![Tensor::from_vec(1, 1, vec![f64::NAN]).unwrap()];
        assert!(clip_gradients(&mut grads, 5.0).is_err());
        let mut inf = vec![Tensor::from_vec(1, 1, vec![f64::INFINITY]).unwrap()];
        assert!(clip_gradients(&mut inf, 5.0).is_err());
    }
}
