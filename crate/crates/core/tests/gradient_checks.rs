//! Central-difference verification of every autodiff primitive, plus direct
//! gradient identities. The primitive case list itself lives in the library's
//! gradient-check suite so the CLI runs exactly what these tests verify.

use dsrsd_core::autodiff::{grad_check, Graph};
use dsrsd_core::gradsuite;
use dsrsd_core::rng;
use dsrsd_core::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

#[test]
fn every_primitive_matches_central_differences_across_seeds() {
    for seed in 0..SEEDS {
        for case in gradsuite::primitive_cases(seed) {
            let report = case
                .run()
                .unwrap_or_else(|e| panic!("grad_check {} failed to run: {e}", case.name()));
            assert!(
                report.passed(),
                "primitive {} seed {}: max rel error {:.3e} at {:?} exceeds {:.1e}",
                case.name(),
                seed,
                report.max_error,
                report.worst,
                report.tolerance
            );
        }
    }
}

#[test]
fn serial_and_parallel_probes_agree() {
    let mut cases = gradsuite::full_suite(3);
    let case = cases.remove(0);
    let serial = case.run_with(1e-5, 1e-4, false).unwrap();
    let par = case.run_with(1e-5, 1e-4, true).unwrap();
    assert_eq!(serial.max_error, par.max_error);
    assert_eq!(serial.worst, par.worst);
}

#[test]
fn gradient_of_sum_is_all_ones() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]).unwrap());
    let loss = g.sum(x);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().values(), &[1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn gradient_of_sum_of_squares_is_two_x() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::scalar(3.0));
    let sq = g.elem_mul(x, x).unwrap();
    let loss = g.sum(sq);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 6.0);
}

#[test]
fn fanout_gradients_accumulate() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::from_rows(&[&[2.0, -1.0]]).unwrap());
    let doubled = g.add(x, x).unwrap();
    let loss = g.sum(doubled);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().values(), &[2.0, 2.0]);
}

#[test]
fn softmax_rows_are_probability_vectors() {
    let mut r = rng::stream(11, 0x50F7);
    for _ in 0..50 {
        let x = uniform(&mut r, 5, 7, -30.0, 30.0);
        let mut g = Graph::new();
        let v = g.constant(x);
        let y = g.row_softmax(v);
        let out = g.value(y);
        for i in 0..out.rows() {
            let row_sum: f64 = out.row(i).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12, "row sums to {row_sum}");
            assert!(out.row(i).iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn uniform_logits_softmax_is_exactly_half() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::from_rows(&[&[0.0, 0.0]]).unwrap());
    let y = g.row_softmax(v);
    assert_eq!(g.value(y).values(), &[0.5, 0.5]);
}

#[test]
fn softmax_composed_with_sum_has_vanishing_gradient() {
    // Rows of a softmax sum to one, so this composite is constant.
    let mut r = rng::stream(5, 0x5057);
    let x = uniform(&mut r, 4, 6, -3.0, 3.0);
    let mut g = Graph::new();
    let v = g.variable(x);
    let y = g.row_softmax(v);
    let loss = g.sum(y);
    let grads = g.backward(loss).unwrap();
    let max_abs = grads
        .get(v)
        .unwrap()
        .values()
        .iter()
        .fold(0.0_f64, |m, &x| m.max(x.abs()));
    assert!(max_abs < 1e-12, "constant function had gradient {max_abs}");
}

#[test]
fn gradcheck_harness_reports_zero_error_for_mean() {
    let mut r = rng::stream(9, 0x3EA);
    let x = uniform(&mut r, 3, 3, -2.0, 2.0);
    let report = grad_check("mean", |g, v| Ok(g.mean(v[0])), &[x]).unwrap();
    assert!(
        report.max_error < 1e-10,
        "mean should check almost exactly, got {:.3e}",
        report.max_error
    );
}

#[test]
fn gelu_matches_its_error_function_definition() {
    // Straight-line oracle: x * 0.5 * (1 + erf(x / sqrt(2))).
    let expected = |x: f64| x * 0.5 * (1.0 + libm::erf(x / 2.0_f64.sqrt()));
    let mut g = Graph::new();
    let v = g.constant(Tensor::from_rows(&[&[0.0, 1.0, -1.0, 0.25, -2.5]]).unwrap());
    let y = g.gelu(v);
    let out = g.value(y);
    assert_eq!(out.get(0, 0), 0.0);
    for (j, &x) in [0.0, 1.0, -1.0, 0.25, -2.5].iter().enumerate() {
        assert!(
            (out.get(0, j) - expected(x)).abs() < 1e-15,
            "gelu({x}) = {} but definition gives {}",
            out.get(0, j),
            expected(x)
        );
    }
    // Paired points collapse to x * (2 * Phi(x) - 1).
    let phi1 = 0.5 * (1.0 + libm::erf(1.0 / 2.0_f64.sqrt()));
    assert!((out.get(0, 1) + out.get(0, 2) - (2.0 * phi1 - 1.0)).abs() < 1e-15);
}

#[test]
fn dropout_rate_zero_is_identity() {
    let mut g = Graph::new();
    let mut r = rng::stream(1, 2);
    let x = g.variable(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
    let before = r.clone();
    let y = g.dropout(x, 0.0, &mut r).unwrap();
    assert_eq!(x, y, "rate 0 must return the operand untouched");
    // No randomness consumed either.
    let mut a = before;
    assert_eq!(a.gen::<u64>(), r.clone().gen::<u64>());
}

#[test]
fn dropout_rejects_rate_one() {
    let mut g = Graph::new();
    let mut r = rng::stream(1, 2);
    let x = g.variable(Tensor::from_rows(&[&[1.0]]).unwrap());
    assert!(g.dropout(x, 1.0, &mut r).is_err());
    assert!(g.dropout(x, -0.1, &mut r).is_err());
}

#[test]
fn dropout_scales_survivors_and_zeroes_the_rest() {
    let mut g = Graph::new();
    let mut r = rng::stream(42, 3);
    let x = g.variable(Tensor::filled(8, 8, 1.0));
    let rate = 0.25;
    let y = g.dropout(x, rate, &mut r).unwrap();
    let scale = 1.0 / (1.0 - rate);
    let mut kept = 0;
    for &v in g.value(y).values() {
        assert!(v == 0.0 || v == scale, "entry {v} is neither 0 nor {scale}");
        if v != 0.0 {
            kept += 1;
        }
    }
    assert!(kept > 0 && kept < 64);
}

#[test]
fn cosine_sim_flags_zero_norm_row() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[&[1.0, 1.0]]).unwrap());
    let err = g.cosine_sim(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("row 1") && msg.contains("left"),
        "error should name the offending row: {msg}"
    );
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(2, 2));
    let y = g.square(x);
    assert!(g.backward(y).is_err());
}

#[test]
fn backward_rejects_constant_only_graph() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(2, 2));
    let loss = g.sum(x);
    assert!(g.backward(loss).is_err());
}

#[test]
fn identical_seeds_give_bit_identical_losses_and_gradients() {
    let run = || {
        let mut r = rng::stream(7, 0xDE7);
        let x = uniform(&mut r, 6, 5, -1.0, 1.0);
        let mut g = Graph::new();
        let v = g.variable(x);
        let mut mask_rng = rng::stream(7, 0xA5);
        let dropped = g.dropout(v, 0.3, &mut mask_rng).unwrap();
        let act = g.gelu(dropped);
        let sq = g.square(act);
        let loss = g.mean(sq);
        let value = g.scalar_value(loss);
        let grads = g.backward(loss).unwrap();
        (value, grads.get(v).unwrap().clone())
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1.values(), g2.values());
}
