use serde::{Deserialize, Serialize};

use super::spec::{LayerSpec, ModelSpec};
use crate::error::Result;
use crate::layers::Gating;

/// Backward costs roughly two forward passes, so a training step is charged
/// three forward passes.
pub const BACKWARD_FLOP_MULTIPLIER: f64 = 3.0;

/// Forward-pass FLOPs of one sequence, two per multiply-add.
///
/// Only matrix products are charged; norms, softmaxes and elementwise ops
/// are ignored. Attention scores use the full `L x L` product.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopEstimate {
    pub attention_projections: f64,
    pub attention_scores: f64,
    pub ffn: f64,
    pub moe_gate: f64,
    pub moe_experts: f64,
    pub output_projection: f64,
}

impl FlopEstimate {
    pub fn total(&self) -> f64 {
        self.attention_projections
            + self.attention_scores
            + self.ffn
            + self.moe_gate
            + self.moe_experts
            + self.output_projection
    }

    fn add_layer(&mut self, layer: &LayerSpec, seq_len: usize) {
        let l = seq_len as f64;
        match layer {
            LayerSpec::Attn(c) => {
                let (d, w) = (c.model_dim as f64, c.inner_dim() as f64);
                self.attention_projections += 2.0 * l * (3.0 * d * w + w * d);
                // q k^T and p v, each L x L x head_dim per head
                self.attention_scores += 2.0 * 2.0 * l * l * w;
            }
            LayerSpec::Ffn(c) => {
                self.ffn += 2.0 * l * c.param_count() as f64;
            }
            LayerSpec::Moe(c) => {
                self.moe_gate += 2.0 * l * c.gate_param_count() as f64;
                let k = c.capacity(seq_len);
                let slots = match c.gating {
                    Gating::Top2 => (c.n_experts.min(2) * seq_len).min(c.n_experts * k),
                    Gating::ExpertChoice => c.n_experts * k.min(seq_len),
                };
                self.moe_experts += 2.0 * slots as f64 * c.expert_param_count() as f64;
            }
        }
    }
}

pub fn forward_flops(model: &ModelSpec, seq_len: usize) -> Result<FlopEstimate> {
    let mut est = FlopEstimate::default();
    for layer in model.body()? {
        est.add_layer(&layer, seq_len);
    }
    est.output_projection =
        2.0 * seq_len as f64 * model.model_dim() as f64 * model.vocab_size as f64;
    Ok(est)
}

/// Analytic cost units of one optimizer step over `batch` sequences.
pub fn step_cost(model: &ModelSpec, seq_len: usize, batch: usize) -> Result<f64> {
    Ok(BACKWARD_FLOP_MULTIPLIER * batch as f64 * forward_flops(model, seq_len)?.total())
}
