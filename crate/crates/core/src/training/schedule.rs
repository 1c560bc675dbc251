/// Learning rate at 1-based `step`: constant for the first
/// `warmup_constant_steps` steps, then `base_lr * sqrt(W / step)`.
///
/// Both branches give `base_lr` at `step == W`, so the schedule is
/// continuous and non-increasing.
pub fn lr_at(step: u64, base_lr: f64, warmup_constant_steps: u64) -> f64 {
    let step = step.max(1);
    if step <= warmup_constant_steps {
        base_lr
    } else {
        base_lr * libm::sqrt(warmup_constant_steps as f64 / step as f64)
    }
}
