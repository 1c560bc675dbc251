//! Concrete proxy trainers: an analytic loss-curve surrogate and real
//! training on a byte corpus.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::trial::{ConstraintMode, ProxySession, ProxyShape, ProxyTrainer, SessionSegment};
use crate::error::{bail, Result};
use crate::layers::Gating;
use crate::model::{count_params, step_cost, BlockSpec, LanguageModel};
use crate::tensor::Activation;
use crate::training::{evaluate_perplexity, BudgetMeter, Corpus, Split, TrainConfig, Trainer};
use crate::Clock;

/// Closed-form loss curve
///
/// ```text
/// irreducible + param_coeff * N^-param_exponent + step_coeff * S^-step_exponent
///     + activation penalty + gating penalty
/// ```
///
/// where `N` is the proxy model's non-embedding parameter count and `S` the
/// number of steps completed. Cost per step is the analytic step cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub irreducible: f64,
    pub param_coeff: f64,
    pub param_exponent: f64,
    pub step_coeff: f64,
    pub step_exponent: f64,
    pub activation_penalty: Vec<(Activation, f64)>,
    pub gating_penalty: Vec<(Gating, f64)>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            irreducible: 1.7,
            param_coeff: 400.0,
            param_exponent: 0.34,
            step_coeff: 4.0,
            step_exponent: 0.5,
            activation_penalty: vec![
                (Activation::GatedGelu, 0.0),
                (Activation::GatedRelu, 0.01),
                (Activation::Gelu, 0.02),
                (Activation::Relu, 0.03),
            ],
            gating_penalty: vec![(Gating::ExpertChoice, 0.0), (Gating::Top2, 0.01)],
        }
    }
}

fn lookup<K: PartialEq>(table: &[(K, f64)], key: K) -> f64 {
    table
        .iter()
        .find(|(k, _)| *k == key)
        .map_or(0.0, |(_, v)| *v)
}

/// Deterministic stand-in for proxy training.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTrainer {
    pub shape: ProxyShape,
    pub curve: SurrogateConfig,
}

impl SurrogateTrainer {
    pub fn new(shape: ProxyShape, curve: SurrogateConfig) -> Self {
        Self { shape, curve }
    }

    /// The step-independent part of the loss and the cost per step.
    pub fn genome_terms(&self, genome: &BlockSpec) -> Result<(f64, f64)> {
        let spec = self.shape.model_spec(genome);
        let n = count_params(&spec)?.n_params_excl_embeddings as f64;
        let c = &self.curve;
        let floor = c.irreducible
            + c.param_coeff * libm::pow(n, -c.param_exponent)
            + lookup(&c.activation_penalty, genome.activation)
            + lookup(&c.gating_penalty, genome.gating);
        let cost = step_cost(&spec, self.shape.seq_len, self.shape.batch_size)?;
        Ok((floor, cost))
    }

    /// Loss after `steps` steps.
    pub fn loss_at(&self, floor: f64, steps: u64) -> f64 {
        floor + self.curve.step_coeff * libm::pow(steps as f64, -self.curve.step_exponent)
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateSession<'a> {
    trainer: &'a SurrogateTrainer,
    floor: f64,
    cost: f64,
    steps: u64,
}

impl ProxySession for SurrogateSession<'_> {
    fn cost_per_step(&self) -> f64 {
        self.cost
    }

    fn advance(&mut self, meter: &mut BudgetMeter, until: f64) -> SessionSegment {
        let mut seg = SessionSegment::default();
        while !meter.reached(until) {
            self.steps += 1;
            meter.charge(self.cost, 0.0);
            seg.losses
                .push((self.steps, self.trainer.loss_at(self.floor, self.steps)));
        }
        seg
    }

    fn step_time(&self) -> f64 {
        self.cost
    }

    fn valid_loss(&mut self) -> Result<f64> {
        if self.steps == 0 {
            bail!(Usage, "no steps taken yet");
        }
        Ok(self.trainer.loss_at(self.floor, self.steps))
    }
}

impl<'a> ProxyTrainer for &'a SurrogateTrainer {
    type Session = SurrogateSession<'a>;

    fn start(&self, genome: &BlockSpec) -> Result<Self::Session> {
        genome.validate()?;
        let (floor, cost) = self.genome_terms(genome)?;
        Ok(SurrogateSession {
            trainer: self,
            floor,
            cost,
            steps: 0,
        })
    }
}

/// Proxy trainer that builds the stacked model and trains it with
/// Adafactor on `corpus`.
#[derive(Debug, Clone)]
pub struct TrainingProxy<'a, C> {
    pub corpus: &'a Corpus,
    pub train: TrainConfig,
    pub shape: ProxyShape,
    pub mode: ConstraintMode,
    pub clock: C,
    /// Cap on validation tokens per evaluation (0 means all).
    pub eval_tokens: usize,
}

pub struct TrainingSession<'a, C> {
    proxy: &'a TrainingProxy<'a, C>,
    trainer: Trainer,
    step_secs: Vec<f64>,
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

impl<C: Clock + Sync> ProxySession for TrainingSession<'_, C> {
    fn cost_per_step(&self) -> f64 {
        self.trainer.cost_per_step()
    }

    fn advance(&mut self, meter: &mut BudgetMeter, until: f64) -> SessionSegment {
        let seg = self.trainer.advance(
            self.proxy.corpus,
            meter,
            until,
            &self.proxy.clock,
            &mut |_| {},
        );
        self.step_secs
            .extend(seg.points.iter().map(|p| p.step_secs));
        SessionSegment {
            losses: seg.points.iter().map(|p| (p.step, p.train_loss)).collect(),
            diverged: seg.diverged,
        }
    }

    fn step_time(&self) -> f64 {
        match self.proxy.mode {
            ConstraintMode::Cost => self.trainer.cost_per_step(),
            ConstraintMode::Wallclock => median(&self.step_secs),
        }
    }

    fn valid_loss(&mut self) -> Result<f64> {
        let valid = self.proxy.corpus.tokens(Split::Valid);
        let valid = match self.proxy.eval_tokens {
            0 => valid,
            n => &valid[..valid.len().min(n + 1)],
        };
        let ppl = evaluate_perplexity(&self.trainer.model, valid, self.trainer.cfg.seq_len)?;
        Ok(libm::log(ppl))
    }
}

impl<'a, C: Clock + Sync> ProxyTrainer for &'a TrainingProxy<'a, C> {
    type Session = TrainingSession<'a, C>;

    fn start(&self, genome: &BlockSpec) -> Result<Self::Session> {
        let spec = self.shape.model_spec(genome);
        let model = LanguageModel::new(spec, self.train.seed)?;
        let cfg = TrainConfig {
            seq_len: self.shape.seq_len,
            batch_size: self.shape.batch_size,
            eval_interval: 0,
            ..self.train.clone()
        };
        Ok(TrainingSession {
            proxy: *self,
            trainer: Trainer::new(model, cfg)?,
            step_secs: Vec::new(),
        })
    }
}

/// Human-readable summary of a genome, e.g. `attn-moe-attn-ffn d768 top2`.
pub fn genome_label(g: &BlockSpec) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    for (i, k) in g.layers.iter().enumerate() {
        if i > 0 {
            s.push('-');
        }
        let _ = write!(s, "{k}");
    }
    let gating = match g.gating {
        Gating::Top2 => "top2",
        Gating::ExpertChoice => "ec",
    };
    let _ = write!(s, " d{} {} c{}", g.model_dim, gating, g.capacity_factor);
    s
}
