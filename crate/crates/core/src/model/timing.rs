use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::Clock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub median_secs: f64,
    pub samples: Vec<f64>,
    /// Deterministic analytic cost of the same step, for reproducible runs.
    pub analytic_flops: f64,
}

/// Median wall time of `step` over `repetitions` runs after one warm-up.
pub fn measure_step_time<C, F>(
    clock: &C,
    repetitions: usize,
    analytic_flops: f64,
    mut step: F,
) -> Result<StepTiming>
where
    C: Clock + ?Sized,
    F: FnMut() -> Result<()>,
{
    if repetitions < 3 {
        bail!(
            Usage,
            "step timing needs at least 3 repetitions, got {}",
            repetitions
        );
    }
    step()?;
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = clock.now_secs();
        step()?;
        samples.push(clock.now_secs() - start);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_secs = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(StepTiming {
        median_secs,
        samples,
        analytic_flops,
    })
}
