use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::routing::{capacity, gate_scores, route, Gating, RoutingDecision};
use super::{Ffn, FfnConfig, ParamId, ParamStore};
use crate::error::{bail, Result};
use crate::tensor::{Activation, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoeConfig {
    pub model_dim: usize,
    pub expert_hidden_dim: usize,
    pub n_experts: usize,
    pub gating: Gating,
    pub capacity_factor: u32,
    pub activation: Activation,
}

impl MoeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experts == 0 {
            bail!(Config, "an MoE layer needs at least one expert");
        }
        if self.capacity_factor == 0 {
            bail!(Config, "capacity factor must be >= 1");
        }
        self.expert_config().validate()
    }

    pub fn expert_config(&self) -> FfnConfig {
        FfnConfig {
            model_dim: self.model_dim,
            hidden_dim: self.expert_hidden_dim,
            activation: self.activation,
        }
    }

    /// Per-expert capacity for a batch of `n_tokens`.
    pub fn capacity(&self, n_tokens: usize) -> usize {
        capacity(self.capacity_factor, n_tokens, self.n_experts)
    }

    pub fn gate_param_count(&self) -> usize {
        self.model_dim * self.n_experts
    }

    pub fn expert_param_count(&self) -> usize {
        self.expert_config().param_count()
    }

    pub fn param_count(&self) -> usize {
        self.gate_param_count() + self.n_experts * self.expert_param_count()
    }

    /// Experts touched per token on average: two for top-2, `c` for expert
    /// choice, never more than exist.
    pub fn active_experts_per_token(&self) -> usize {
        let k = match self.gating {
            Gating::Top2 => 2,
            Gating::ExpertChoice => self.capacity_factor as usize,
        };
        k.min(self.n_experts)
    }
}

/// Sparsely gated FFN: a gating matrix plus `E` independent expert FFNs.
#[derive(Debug, Clone)]
pub struct Moe {
    pub cfg: MoeConfig,
    pub w_gate: ParamId,
    pub experts: Vec<Ffn>,
}

#[derive(Debug, Clone)]
pub struct MoeOutput {
    pub output: Var,
    /// Load-balance loss for top-2, a zero constant for expert choice.
    pub aux_loss: Var,
    pub scores: Var,
    pub decision: RoutingDecision,
}

impl Moe {
    pub fn init<R: Rng + ?Sized>(
        cfg: MoeConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let w_gate = store.add_uniform(
            format!("{prefix}.w_gate"),
            &[cfg.model_dim, cfg.n_experts],
            cfg.model_dim,
            rng,
        )?;
        let experts = (0..cfg.n_experts)
            .map(|e| {
                Ffn::init(
                    cfg.expert_config(),
                    store,
                    &format!("{prefix}.expert{e}"),
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            w_gate,
            experts,
        })
    }

    /// `x[L, d] -> [L, d]`.
    ///
    /// Each routed token runs through its expert and the expert output is
    /// scaled by the combine weight; contributions of several experts add.
    /// Dropped tokens produce zero rows here.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<MoeOutput> {
        let (n, d) = tape.value(x).dims2()?;
        let k = self.cfg.capacity(n);
        if k < 1 {
            bail!(
                Config,
                "expert capacity floor({} * {} / {}) is zero",
                self.cfg.capacity_factor,
                n,
                self.cfg.n_experts
            );
        }
        let w_g = store.bind(tape, self.w_gate);
        let scores = gate_scores(tape, x, w_g)?;
        let decision = route(self.cfg.gating, tape.value(scores), k)?;

        let mut output: Option<Var> = None;
        for (e, expert) in self.experts.iter().enumerate() {
            let slots = decision.expert_slots(e);
            if slots.is_empty() {
                continue;
            }
            let tokens: Vec<usize> = slots.iter().map(|&(t, _)| t).collect();
            let pairs: Vec<(usize, usize)> = tokens.iter().map(|&t| (t, e)).collect();
            let xe = tape.gather_rows(x, &tokens)?;
            let he = expert.forward(tape, store, xe)?;
            let we = tape.gather_elements(scores, &pairs)?;
            let ye = tape.mul_rows(he, we)?;
            let back = tape.scatter_add_rows(ye, &tokens, n)?;
            output = Some(match output {
                Some(acc) => tape.add(acc, back)?,
                None => back,
            });
        }
        let output = match output {
            Some(v) => v,
            None => tape.constant(Tensor::zeros([n, d])?),
        };
        let aux_loss = match self.cfg.gating {
            Gating::Top2 => load_balance_aux_loss(tape, scores)?,
            Gating::ExpertChoice => tape.constant(Tensor::scalar(0.0)),
        };
        Ok(MoeOutput {
            output,
            aux_loss,
            scores,
            decision,
        })
    }
}

/// `E * sum_e f_e * P_e` where `f_e` is the fraction of tokens whose
/// highest-scoring expert is `e` and `P_e` the mean gate score of `e`.
///
/// `f_e` is a constant; the gradient flows through `P_e` only.
pub fn load_balance_aux_loss(tape: &mut Tape, scores: Var) -> Result<Var> {
    let (n, e) = tape.value(scores).dims2()?;
    let mut top1 = alloc::vec![0.0; e];
    for t in 0..n {
        let best = crate::tensor::top_k_indices(tape.value(scores).row(t), 1)?[0];
        top1[best] += 1.0 / n as f64;
    }
    let avg = tape.constant(Tensor::new([1, n], alloc::vec![1.0 / n as f64; n])?);
    let mean_scores = tape.matmul(avg, scores)?;
    let fractions = tape.constant(Tensor::new([1, e], top1)?);
    let prod = tape.mul(mean_scores, fractions)?;
    let total = tape.sum(prod);
    Ok(tape.scale(total, e as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn aux_of(rows: &[&[f64]]) -> f64 {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::from_rows(rows).unwrap());
        let l = load_balance_aux_loss(&mut tape, s).unwrap();
        tape.value(l).data()[0]
    }

    #[test]
    fn aux_loss_reference_values() {
        assert!((aux_of(&[&[0.25; 4], &[0.25; 4], &[0.25; 4]]) - 1.0).abs() < 1e-15);
        let one_hot: &[f64] = &[1.0, 0.0, 0.0, 0.0];
        assert!((aux_of(&[one_hot, one_hot, one_hot]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_below_one_is_config_error() {
        let cfg = MoeConfig {
            model_dim: 2,
            expert_hidden_dim: 3,
            n_experts: 4,
            gating: Gating::ExpertChoice,
            capacity_factor: 1,
            activation: Activation::Relu,
        };
        let mut store = ParamStore::new();
        let moe = Moe::init(cfg, &mut store, "moe", &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new([3, 2], vec![0.1; 6]).unwrap());
        assert!(matches!(
            moe.forward(&mut tape, &store, x),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn expert_choice_aux_is_zero() {
        let cfg = MoeConfig {
            model_dim: 3,
            expert_hidden_dim: 4,
            n_experts: 2,
            gating: Gating::ExpertChoice,
            capacity_factor: 2,
            activation: Activation::GatedGelu,
        };
        let mut store = ParamStore::new();
        let moe = Moe::init(cfg, &mut store, "moe", &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut tape = Tape::new();
        let x =
            tape.constant(Tensor::new([4, 3], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap());
        let out = moe.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.value(out.aux_loss).data(), &[0.0]);
        assert_eq!(out.decision.expert_loads(), vec![4, 4]);
    }

    #[test]
    fn activated_expert_accounting() {
        let mut cfg = MoeConfig {
            model_dim: 8,
            expert_hidden_dim: 16,
            n_experts: 32,
            gating: Gating::Top2,
            capacity_factor: 3,
            activation: Activation::Relu,
        };
        assert_eq!(cfg.active_experts_per_token(), 2);
        cfg.gating = Gating::ExpertChoice;
        assert_eq!(cfg.active_experts_per_token(), 3);
        cfg.n_experts = 1;
        assert_eq!(cfg.active_experts_per_token(), 1);
    }
}
