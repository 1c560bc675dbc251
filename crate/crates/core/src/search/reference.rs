//! GLaM-style reference architectures: dense FFN and top-2 MoE layers
//! alternating after attention.

use alloc::vec;

use crate::layers::Gating;
use crate::model::{BlockSpec, LayerKind, ModelSpec};
use crate::tensor::Activation;

/// Vocabulary of the published GLaM models, used only for counting.
pub const GLAM_VOCAB_SIZE: usize = 256_000;

/// Published totals for the 0.1B/32E baseline: all parameters and
/// activated parameters per token.
pub const GLAM_0_1B_32E_PUBLISHED: (u64, u64) = (1_900_000_000, 145_000_000);

/// `[attn, ffn, attn, moe]` with top-2 gating at capacity factor 2 and
/// gated GeLU.
pub fn glam_block(
    model_dim: usize,
    hidden_dim: usize,
    n_heads: usize,
    head_dim: usize,
    n_experts: usize,
) -> BlockSpec {
    BlockSpec {
        layers: vec![
            LayerKind::Attn,
            LayerKind::Ffn,
            LayerKind::Attn,
            LayerKind::Moe,
        ],
        model_dim,
        moe_hidden_dim: hidden_dim,
        ffn_hidden_dim: hidden_dim,
        n_heads,
        head_dim,
        gating: Gating::Top2,
        capacity_factor: 2,
        activation: Activation::GatedGelu,
        n_experts,
    }
}

/// Reconstruction of the 0.1B/32E baseline: 12 attention layers at
/// `d = 768`, 12 heads of 64, hidden width 3072, every other FFN an MoE
/// layer with 32 experts.
pub fn glam_0_1b_32e() -> ModelSpec {
    ModelSpec::new(glam_block(768, 3072, 12, 64, 32), 6, GLAM_VOCAB_SIZE, 1024)
}

/// The block of [`glam_0_1b_32e`] with a caller-chosen expert count and
/// head width; the default search baseline.
pub fn glam_baseline_genome(n_experts: usize, head_dim: usize) -> BlockSpec {
    glam_block(768, 3072, 12, head_dim, n_experts)
}
