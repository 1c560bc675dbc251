use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adafactor::{Adafactor, AdafactorConfig};
use super::corpus::{eval_windows, Corpus, Split};
use super::schedule::lr_at;
use crate::error::{bail, Error, Result};
use crate::model::{step_cost, LanguageModel};
use crate::tensor::{log_sum_exp, Tape};
use crate::Clock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_constant_steps: u64,
    /// Step budget used when no other budget is given.
    pub max_steps: u64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub aux_coeff: f64,
    pub beta2: f64,
    /// Validation perplexity is logged every this many steps (0 disables).
    pub eval_interval: u64,
    /// Cap on validation tokens per periodic evaluation (0 means all).
    pub eval_tokens: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            warmup_constant_steps: 100,
            max_steps: 1000,
            batch_size: 8,
            seq_len: 128,
            seed: 0,
            aux_coeff: 0.01,
            beta2: 0.99,
            eval_interval: 100,
            eval_tokens: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            bail!(Config, "base_lr must be positive");
        }
        if self.batch_size == 0 || self.seq_len == 0 {
            bail!(Config, "batch_size and seq_len must be positive");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            bail!(Config, "beta2 must lie in [0, 1)");
        }
        if self.aux_coeff < 0.0 {
            bail!(Config, "aux_coeff must be non-negative");
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        lr_at(step, self.base_lr, self.warmup_constant_steps)
    }
}

/// How much training a run may consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    MaxSteps(u64),
    MaxSeconds(f64),
    /// Analytic FLOP units; deterministic across machines.
    MaxCostUnits(f64),
}

const FRACTION_SLACK: f64 = 1e-9;

/// Tracks consumption against a [`Budget`].
///
/// A step is started only while the budget is not yet exhausted, so the
/// overshoot is at most one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetMeter {
    pub budget: Budget,
    pub steps: u64,
    pub cost: f64,
    pub secs: f64,
}

impl BudgetMeter {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget,
            steps: 0,
            cost: 0.0,
            secs: 0.0,
        }
    }

    pub fn exhausted(&self) -> bool {
        self.reached(1.0)
    }

    /// Whether `until` of the budget is consumed, ignoring the rounding
    /// error accumulated by summing per-step costs.
    pub fn reached(&self, until: f64) -> bool {
        self.fraction() >= until - FRACTION_SLACK
    }

    /// Share of the budget consumed so far, saturating at 1 for an empty
    /// budget.
    pub fn fraction(&self) -> f64 {
        let (used, total) = match self.budget {
            Budget::MaxSteps(n) => (self.steps as f64, n as f64),
            Budget::MaxSeconds(s) => (self.secs, s),
            Budget::MaxCostUnits(c) => (self.cost, c),
        };
        if total <= 0.0 {
            1.0
        } else {
            used / total
        }
    }

    pub fn charge(&mut self, cost: f64, secs: f64) {
        self.steps += 1;
        self.cost += cost;
        self.secs += secs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    /// Mean next-token cross-entropy over the batch.
    pub loss: f64,
    pub aux_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub train_loss: f64,
    pub aux_loss: f64,
    pub lr: f64,
    pub step_secs: f64,
    pub step_cost: f64,
    pub cost_consumed: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub trajectory: Vec<TrajectoryPoint>,
    pub steps: u64,
    pub cost_consumed: f64,
    pub secs_elapsed: f64,
    /// Set when a step produced a non-finite loss or gradient; the
    /// trajectory up to that point is kept.
    pub diverged: Option<String>,
}

/// Points produced by one [`Trainer::advance`] call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub points: Vec<TrajectoryPoint>,
    pub diverged: Option<String>,
}

/// Owns a model, its optimizer and the step counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: LanguageModel,
    pub optimizer: Adafactor,
    pub cfg: TrainConfig,
    /// Number of completed optimizer steps.
    pub step: u64,
    cost_per_step: f64,
}

impl Trainer {
    pub fn new(model: LanguageModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.seq_len > model.spec.max_seq_len {
            bail!(
                Config,
                "seq_len {} exceeds the model's max_seq_len {}",
                cfg.seq_len,
                model.spec.max_seq_len
            );
        }
        let optimizer = Adafactor::new(
            AdafactorConfig {
                beta2: cfg.beta2,
                ..AdafactorConfig::default()
            },
            &model.params,
        );
        let cost_per_step = step_cost(&model.spec, cfg.seq_len, cfg.batch_size)?;
        Ok(Self {
            model,
            optimizer,
            cfg,
            step: 0,
            cost_per_step,
        })
    }

    /// Analytic cost units charged per optimizer step.
    pub fn cost_per_step(&self) -> f64 {
        self.cost_per_step
    }

    /// One forward, backward and Adafactor update on a fresh batch.
    ///
    /// The batch is drawn from a ChaCha stream keyed by `(seed, step)`, so a
    /// resumed run sees the same data as an uninterrupted one.
    pub fn train_step(&mut self, corpus: &Corpus) -> Result<StepStats> {
        let step = self.step + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(step);
        let batch = corpus.sample_batch(
            Split::Train,
            self.cfg.seq_len,
            self.cfg.batch_size,
            &mut rng,
        )?;

        let mut tape = Tape::new();
        let mut total = None;
        let (mut ce_sum, mut aux_sum) = (0.0, 0.0);
        for (x, y) in &batch {
            let l = self.model.loss(&mut tape, x, y, self.cfg.aux_coeff)?;
            ce_sum += tape.value(l.cross_entropy).data()[0];
            aux_sum += tape.value(l.aux_loss).data()[0];
            total = Some(match total {
                Some(acc) => tape.add(acc, l.total)?,
                None => l.total,
            });
        }
        let n = batch.len() as f64;
        let total = total.expect("batch_size >= 1");
        let mean = tape.scale(total, 1.0 / n);
        tape.backward(mean)?;
        self.model.params.zero_grads();
        self.model.params.harvest_grads(&tape)?;
        let lr = self.cfg.lr_at(step);
        self.optimizer.step(&mut self.model.params, lr)?;
        self.step = step;
        Ok(StepStats {
            step,
            loss: ce_sum / n,
            aux_loss: aux_sum / n,
            lr,
        })
    }

    /// Trains until `budget` is exhausted or a step diverges.
    pub fn train<C: Clock + ?Sized>(
        &mut self,
        corpus: &Corpus,
        budget: Budget,
        clock: &C,
    ) -> TrainOutcome {
        self.train_with(corpus, budget, clock, &mut |_| {})
    }

    /// Like [`Trainer::train`], reporting each trajectory point as it is
    /// produced.
    pub fn train_with<C: Clock + ?Sized>(
        &mut self,
        corpus: &Corpus,
        budget: Budget,
        clock: &C,
        on_point: &mut dyn FnMut(&TrajectoryPoint),
    ) -> TrainOutcome {
        let mut meter = BudgetMeter::new(budget);
        let segment = self.advance(corpus, &mut meter, 1.0, clock, on_point);
        TrainOutcome {
            trajectory: segment.points,
            steps: meter.steps,
            cost_consumed: meter.cost,
            secs_elapsed: meter.secs,
            diverged: segment.diverged,
        }
    }

    /// Steps while `meter` reports less than `until` of its budget consumed.
    /// A meter may be advanced in several segments.
    pub fn advance<C: Clock + ?Sized>(
        &mut self,
        corpus: &Corpus,
        meter: &mut BudgetMeter,
        until: f64,
        clock: &C,
        on_point: &mut dyn FnMut(&TrajectoryPoint),
    ) -> Segment {
        self.advance_at_most(corpus, meter, until, u64::MAX, clock, on_point)
    }

    /// [`Trainer::advance`] that also returns after `max_steps` steps.
    pub fn advance_at_most<C: Clock + ?Sized>(
        &mut self,
        corpus: &Corpus,
        meter: &mut BudgetMeter,
        until: f64,
        max_steps: u64,
        clock: &C,
        on_point: &mut dyn FnMut(&TrajectoryPoint),
    ) -> Segment {
        let mut points = Vec::new();
        let mut diverged = None;
        let mut taken = 0;
        while taken < max_steps && !meter.reached(until) {
            taken += 1;
            let t0 = clock.now_secs();
            let stats = match self.train_step(corpus) {
                Ok(s) => s,
                Err(e) => {
                    diverged = Some(divergence_message(self.step + 1, e));
                    break;
                }
            };
            let dt = clock.now_secs() - t0;
            meter.charge(self.cost_per_step, dt);
            let valid_perplexity = self.periodic_eval(corpus);
            let point = TrajectoryPoint {
                step: stats.step,
                train_loss: stats.loss,
                aux_loss: stats.aux_loss,
                lr: stats.lr,
                step_secs: dt,
                step_cost: self.cost_per_step,
                cost_consumed: meter.cost,
                valid_perplexity,
            };
            on_point(&point);
            points.push(point);
        }
        Segment { points, diverged }
    }

    fn periodic_eval(&self, corpus: &Corpus) -> Option<f64> {
        if self.cfg.eval_interval == 0 || !self.step.is_multiple_of(self.cfg.eval_interval) {
            return None;
        }
        let valid = corpus.tokens(Split::Valid);
        let valid = match self.cfg.eval_tokens {
            0 => valid,
            n => &valid[..valid.len().min(n + 1)],
        };
        evaluate_perplexity(&self.model, valid, self.cfg.seq_len).ok()
    }
}

fn divergence_message(step: u64, e: Error) -> String {
    format!("step {step}: {e}")
}

/// `exp` of the mean teacher-forced cross-entropy over every target in
/// `tokens`.
pub fn evaluate_perplexity(model: &LanguageModel, tokens: &[usize], seq_len: usize) -> Result<f64> {
    if tokens.len() < 2 {
        bail!(Input, "perplexity needs at least two tokens");
    }
    let seq_len = seq_len.min(model.spec.max_seq_len);
    let mut nll = 0.0;
    let mut count = 0usize;
    for (x, y, first) in eval_windows(tokens, seq_len) {
        let (logits, _) = model.lm_forward(x)?;
        let v = logits.shape()[1];
        for (row, &t) in logits.data().chunks(v).zip(y).skip(first) {
            nll += log_sum_exp(row) - row[t];
            count += 1;
        }
    }
    let ppl = libm::exp(nll / count as f64);
    if !ppl.is_finite() {
        bail!(NonFinite, "perplexity is not finite");
    }
    Ok(ppl)
}
