//! One search trial: proxy-train a genome under a fixed budget, prune it at
//! the checkpoint fraction if it breaks a constraint, and score it.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::model::{BlockSpec, ModelSpec};
use crate::training::{Budget, BudgetMeter, VOCAB_SIZE};

/// Reward given to every trial that did not complete.
pub const STOPPED_REWARD: f64 = -1.0;

/// Upper bound on the loss points kept per trial record.
pub const TRAJECTORY_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    StepTimeViolation,
    PerplexityViolation,
    Diverged,
    /// The budget did not allow a single step.
    NoSteps,
    /// The proxy model could not be built.
    Invalid,
}

/// What the step-time constraint compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Measured seconds per step.
    Wallclock,
    /// Analytic cost units per step; machine independent.
    Cost,
}

/// How a genome becomes a proxy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyShape {
    pub n_blocks: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub batch_size: usize,
}

impl Default for ProxyShape {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            vocab_size: VOCAB_SIZE,
            seq_len: 128,
            batch_size: 8,
        }
    }
}

impl ProxyShape {
    pub fn model_spec(&self, genome: &BlockSpec) -> ModelSpec {
        ModelSpec::new(genome.clone(), self.n_blocks, self.vocab_size, self.seq_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub budget: Budget,
    /// Share of the budget after which constraints are checked.
    pub checkpoint_fraction: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            budget: Budget::MaxCostUnits(1e12),
            checkpoint_fraction: 0.25,
        }
    }
}

/// Reference values a trial must not exceed at its checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub step_time: f64,
    /// Validation perplexity of the baseline at the same checkpoint.
    pub checkpoint_perplexity: f64,
}

/// Result of running one genome, before ids are attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// The constraint metric: seconds or cost units per step.
    pub step_time: f64,
    pub cost_per_step: f64,
    pub steps_completed: u64,
    pub cost_consumed: f64,
    /// `(step, train loss)` pairs, evenly thinned to at most
    /// [`TRAJECTORY_POINTS`] and always ending at the last step.
    pub loss_trajectory: Vec<(u64, f64)>,
    pub checkpoint_perplexity: Option<f64>,
    /// Final validation loss, present only for completed trials.
    pub final_valid_loss: Option<f64>,
    pub reward: f64,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TrialOutcome {
    pub fn completed(&self) -> bool {
        self.stop_reason == StopReason::Completed
    }

    fn stopped(reason: StopReason, detail: Option<String>) -> Self {
        Self {
            step_time: 0.0,
            cost_per_step: 0.0,
            steps_completed: 0,
            cost_consumed: 0.0,
            loss_trajectory: Vec::new(),
            checkpoint_perplexity: None,
            final_valid_loss: None,
            reward: STOPPED_REWARD,
            stop_reason: reason,
            detail,
        }
    }
}

/// Reward of a trial: the negated final validation loss when completed,
/// [`STOPPED_REWARD`] otherwise.
pub fn reward(stop_reason: StopReason, final_valid_loss: f64) -> f64 {
    match stop_reason {
        StopReason::Completed => -final_valid_loss,
        _ => STOPPED_REWARD,
    }
}

/// Constraint check at the checkpoint. Both comparisons are strict: a
/// trial exactly at the baseline continues.
pub fn early_stop_check(
    step_time: f64,
    checkpoint_perplexity: f64,
    baseline: &Baseline,
) -> Option<StopReason> {
    if step_time > baseline.step_time {
        Some(StopReason::StepTimeViolation)
    } else if checkpoint_perplexity > baseline.checkpoint_perplexity {
        Some(StopReason::PerplexityViolation)
    } else {
        None
    }
}

/// Losses recorded while a session advances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionSegment {
    pub losses: Vec<(u64, f64)>,
    pub diverged: Option<String>,
}

/// A proxy model being trained for one trial.
pub trait ProxySession {
    fn cost_per_step(&self) -> f64;

    /// Trains while `meter` has consumed less than `until` of its budget.
    fn advance(&mut self, meter: &mut BudgetMeter, until: f64) -> SessionSegment;

    /// The constraint metric measured so far.
    fn step_time(&self) -> f64;

    /// Current mean validation cross-entropy.
    fn valid_loss(&mut self) -> Result<f64>;
}

/// Builds proxy sessions; shared read-only across concurrent trials.
pub trait ProxyTrainer: Sync {
    type Session: ProxySession;

    fn start(&self, genome: &BlockSpec) -> Result<Self::Session>;
}

fn thin(points: Vec<(u64, f64)>) -> Vec<(u64, f64)> {
    let n = points.len();
    if n <= TRAJECTORY_POINTS {
        return points;
    }
    (1..=TRAJECTORY_POINTS)
        .map(|i| points[i * n / TRAJECTORY_POINTS - 1])
        .collect()
}

/// Trains `genome` under `cfg.budget`, checks the constraints against
/// `baseline` once `cfg.checkpoint_fraction` of the budget is consumed, and
/// scores the result. Without a baseline no trial is pruned.
pub fn run_trial<P: ProxyTrainer + ?Sized>(
    proxy: &P,
    genome: &BlockSpec,
    cfg: &TrialConfig,
    baseline: Option<&Baseline>,
) -> TrialOutcome {
    let mut session = match proxy.start(genome) {
        Ok(s) => s,
        Err(e) => return TrialOutcome::stopped(StopReason::Invalid, Some(alloc::format!("{e}"))),
    };
    let cost_per_step = session.cost_per_step();
    let mut meter = BudgetMeter::new(cfg.budget);
    if meter.exhausted() {
        let mut out = TrialOutcome::stopped(StopReason::NoSteps, None);
        out.cost_per_step = cost_per_step;
        return out;
    }

    let mut losses = Vec::new();
    let first = session.advance(&mut meter, cfg.checkpoint_fraction);
    losses.extend(first.losses);
    let mut diverged = first.diverged;
    let step_time = session.step_time();

    let mut checkpoint_perplexity = None;
    let mut stop = None;
    if diverged.is_none() {
        match session.valid_loss() {
            Ok(l) => {
                let ppl = libm::exp(l);
                checkpoint_perplexity = Some(ppl);
                if let Some(b) = baseline {
                    stop = early_stop_check(step_time, ppl, b);
                }
            }
            Err(e) => diverged = Some(alloc::format!("{e}")),
        }
    }

    let mut final_valid_loss = None;
    if diverged.is_none() && stop.is_none() {
        let rest = session.advance(&mut meter, 1.0);
        losses.extend(rest.losses);
        diverged = rest.diverged;
        if diverged.is_none() {
            match session.valid_loss() {
                Ok(l) => final_valid_loss = Some(l),
                Err(e) => diverged = Some(alloc::format!("{e}")),
            }
        }
    }

    let stop_reason = match (&diverged, stop) {
        (Some(_), _) => StopReason::Diverged,
        (None, Some(r)) => r,
        (None, None) => StopReason::Completed,
    };
    TrialOutcome {
        step_time,
        cost_per_step,
        steps_completed: meter.steps,
        cost_consumed: meter.cost,
        loss_trajectory: thin(losses),
        checkpoint_perplexity,
        final_valid_loss,
        reward: reward(stop_reason, final_valid_loss.unwrap_or(0.0)),
        stop_reason,
        detail: diverged,
    }
}

/// Runs `genome` once without constraints and keeps its step time and
/// checkpoint perplexity as the reference for later trials.
pub fn measure_baseline<P: ProxyTrainer + ?Sized>(
    proxy: &P,
    genome: &BlockSpec,
    cfg: &TrialConfig,
) -> Result<(Baseline, TrialOutcome)> {
    let out = run_trial(proxy, genome, cfg, None);
    match (out.stop_reason, out.checkpoint_perplexity) {
        (StopReason::Completed, Some(ppl)) => Ok((
            Baseline {
                step_time: out.step_time,
                checkpoint_perplexity: ppl,
            },
            out,
        )),
        (reason, _) => bail!(
            Config,
            "baseline trial did not complete ({:?}{})",
            reason,
            out.detail
                .as_deref()
                .map(|d| alloc::format!(": {d}"))
                .unwrap_or_default()
        ),
    }
}
