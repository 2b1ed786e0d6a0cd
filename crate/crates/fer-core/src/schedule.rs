//! Warm-up cosine learning-rate schedule.

/// Linear ramp from zero to `base_lr` over the first
/// `warmup_fraction * total_steps` steps, then cosine decay back to zero
/// over the remainder.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64, warmup_fraction: f64) -> f64 {
    assert!(total_steps >= 1, "schedule needs at least one step");
    assert!(step <= total_steps, "step {step} beyond {total_steps}");
    assert!((0.0..1.0).contains(&warmup_fraction));
    let warmup = (warmup_fraction * total_steps as f64).round() as usize;
    if step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    let span = (total_steps - warmup).max(1) as f64;
    let progress = (step - warmup) as f64 / span;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_starts_at_zero_and_peaks_at_base() {
        assert_eq!(lr_schedule(0, 100, 2e-3, 0.1), 0.0);
        assert_eq!(lr_schedule(10, 100, 2e-3, 0.1), 2e-3);
    }

    #[test]
    fn cosine_ends_at_zero() {
        let lr = lr_schedule(100, 100, 2e-3, 0.1);
        assert!(lr.abs() < 1e-9, "{lr}");
    }

    #[test]
    fn warmup_is_monotone_and_decay_is_monotone() {
        let total = 200;
        let mut prev = -1.0;
        for step in 0..=20 {
            let lr = lr_schedule(step, total, 1.0, 0.1);
            assert!(lr >= prev);
            prev = lr;
        }
        let mut prev = 2.0;
        for step in 20..=total {
            let lr = lr_schedule(step, total, 1.0, 0.1);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn zero_warmup_starts_at_base() {
        assert_eq!(lr_schedule(0, 10, 1.0, 0.0), 1.0);
    }
}
