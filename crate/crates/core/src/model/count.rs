use serde::{Deserialize, Serialize};

use super::spec::{LayerSpec, ModelSpec};
use crate::error::Result;

/// Parameter tallies under both embedding conventions.
///
/// "Embeddings" are the token table, the position table and the untied
/// output projection. Activated counts charge each MoE layer its gating
/// matrix plus the experts a token uses on average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub n_params: u64,
    pub n_params_excl_embeddings: u64,
    pub n_act_params: u64,
    pub n_act_params_excl_embeddings: u64,
    pub embedding_params: u64,
}

/// `(total, activated)` for one sub-layer including its pre-norm.
pub fn layer_param_count(layer: &LayerSpec) -> (u64, u64) {
    let norm = 2 * layer.model_dim() as u64;
    match layer {
        LayerSpec::Attn(c) => {
            let n = norm + c.param_count() as u64;
            (n, n)
        }
        LayerSpec::Ffn(c) => {
            let n = norm + c.param_count() as u64;
            (n, n)
        }
        LayerSpec::Moe(c) => {
            let gate = c.gate_param_count() as u64;
            let expert = c.expert_param_count() as u64;
            (
                norm + gate + c.n_experts as u64 * expert,
                norm + gate + c.active_experts_per_token() as u64 * expert,
            )
        }
    }
}

pub fn count_params(model: &ModelSpec) -> Result<ParamCount> {
    let d = model.model_dim() as u64;
    let v = model.vocab_size as u64;
    let embedding = v * d + model.max_seq_len as u64 * d + d * v;
    let final_norm = 2 * d;
    let (mut total, mut active) = (final_norm, final_norm);
    for layer in model.body()? {
        let (t, a) = layer_param_count(&layer);
        total += t;
        active += a;
    }
    Ok(ParamCount {
        n_params: total + embedding,
        n_params_excl_embeddings: total,
        n_act_params: active + embedding,
        n_act_params_excl_embeddings: active,
        embedding_params: embedding,
    })
}
