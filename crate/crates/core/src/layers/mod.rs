//! The three sub-layer primitives (causal attention, dense FFN, MoE FFN) and
//! the two routing algorithms used by the MoE layer.

mod attention;
mod ffn;
mod moe;
mod params;
mod routing;

pub use attention::{Attention, AttentionConfig};
pub use ffn::{Ffn, FfnConfig};
pub use moe::{load_balance_aux_loss, Moe, MoeConfig, MoeOutput};
pub use params::{ParamId, ParamStore};
pub use routing::{
    capacity, gate_scores, route, route_expert_choice, route_top2, Assignment, Gating,
    RoutingDecision,
};
