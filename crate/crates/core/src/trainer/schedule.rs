//! Learning-rate and loss-weight schedules.

use crate::losses::LossWeights;

/// Cosine decay with a linear warmup: `lr` rises linearly from 0 to
/// `base_lr` over `warmup_steps`, then follows
/// `min_lr + 0.5 (base_lr - min_lr) (1 + cos(pi * progress))` down to
/// `min_lr` at `total_steps`. Steps past the end stay at `min_lr`.
pub fn cosine_lr(
    step: usize,
    total_steps: usize,
    warmup_steps: usize,
    base_lr: f64,
    min_lr: f64,
) -> f64 {
    debug_assert!(warmup_steps < total_steps.max(1));
    if warmup_steps > 0 && step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if step >= total_steps {
        return min_lr;
    }
    let span = (total_steps - warmup_steps) as f64;
    let progress = (step - warmup_steps) as f64 / span;
    min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Per-epoch effective loss weights: the decorrelation and orthogonality
/// targets ramp linearly from 10% to 100% over `ramp_epochs`, everything
/// else holds steady. `ramp_epochs = 0` disables ramping.
pub fn lambda_schedule(epoch: usize, targets: &LossWeights, ramp_epochs: usize) -> LossWeights {
    let factor = if ramp_epochs == 0 || epoch >= ramp_epochs {
        1.0
    } else {
        0.1 + 0.9 * epoch as f64 / ramp_epochs as f64
    };
    LossWeights {
        con: targets.con,
        align: targets.align,
        dec: targets.dec * factor,
        orth: targets.orth * factor,
        task: targets.task,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_endpoint_hits_base_exactly() {
        assert_eq!(cosine_lr(100, 1000, 100, 3e-4, 1e-6), 3e-4);
    }

    #[test]
    fn final_step_hits_min_exactly() {
        assert_eq!(cosine_lr(1000, 1000, 100, 3e-4, 1e-6), 1e-6);
        assert_eq!(cosine_lr(1500, 1000, 100, 3e-4, 1e-6), 1e-6);
    }

    #[test]
    fn decay_midpoint_is_half_base_when_min_is_zero() {
        let lr = cosine_lr(550, 1000, 100, 2e-4, 0.0);
        assert!((lr - 1e-4).abs() < 1e-12 * 1e-4 + 1e-20, "{lr}");
    }

    #[test]
    fn warmup_starts_at_zero_and_rises_linearly() {
        assert_eq!(cosine_lr(0, 1000, 100, 1e-3, 0.0), 0.0);
        let quarter = cosine_lr(25, 1000, 100, 1e-3, 0.0);
        assert!((quarter - 2.5e-4).abs() < 1e-18);
    }

    #[test]
    fn trace_is_continuous_and_monotone_after_warmup() {
        let (total, warmup, base, min) = (400, 40, 1e-3, 1e-5);
        let slope_bound = (base / warmup as f64)
            .max(base * std::f64::consts::PI / (2.0 * (total - warmup) as f64));
        let mut prev = cosine_lr(0, total, warmup, base, min);
        for step in 1..=total {
            let lr = cosine_lr(step, total, warmup, base, min);
            assert!(
                (lr - prev).abs() <= slope_bound + 1e-15,
                "jump at step {step}: {prev} -> {lr}"
            );
            if step > warmup {
                assert!(lr <= prev, "decay must be monotone at step {step}");
            }
            prev = lr;
        }
    }

    #[test]
    fn no_warmup_starts_at_base() {
        assert_eq!(cosine_lr(0, 100, 0, 5e-4, 0.0), 5e-4);
    }

    #[test]
    fn ramp_starts_at_a_tenth_and_ends_at_target() {
        let targets = LossWeights::default();
        let start = lambda_schedule(0, &targets, 5);
        assert!((start.dec - 0.005).abs() < 1e-15, "{}", start.dec);
        assert!((start.orth - 0.005).abs() < 1e-15);
        assert_eq!(start.con, targets.con);
        assert_eq!(start.align, targets.align);
        assert_eq!(start.task, targets.task);

        let mid = lambda_schedule(3, &targets, 5);
        let expected = 0.05 * (0.1 + 0.9 * 3.0 / 5.0);
        assert!((mid.dec - expected).abs() < 1e-15);

        for epoch in [5, 6, 100] {
            let done = lambda_schedule(epoch, &targets, 5);
            assert_eq!(done.dec.to_bits(), targets.dec.to_bits());
            assert_eq!(done.orth.to_bits(), targets.orth.to_bits());
        }
    }

    #[test]
    fn zero_ramp_applies_targets_immediately() {
        let targets = LossWeights::default();
        let w = lambda_schedule(0, &targets, 0);
        assert_eq!(w, targets);
    }
}
