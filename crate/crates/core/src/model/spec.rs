//! The architecture genome: layer kinds, block and model specs, and the
//! stacking / scaling transforms applied to them.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::layers::{AttentionConfig, FfnConfig, Gating, MoeConfig};
use crate::tensor::Activation;

/// Version written into every genome document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Attn,
    Moe,
    Ffn,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Attn, LayerKind::Moe, LayerKind::Ffn];
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Attn => "attn",
            LayerKind::Moe => "moe",
            LayerKind::Ffn => "ffn",
        })
    }
}

/// One sub-layer with its fully resolved configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Attn(AttentionConfig),
    Moe(MoeConfig),
    Ffn(FfnConfig),
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Attn(_) => LayerKind::Attn,
            LayerSpec::Moe(_) => LayerKind::Moe,
            LayerSpec::Ffn(_) => LayerKind::Ffn,
        }
    }

    pub fn model_dim(&self) -> usize {
        match self {
            LayerSpec::Attn(c) => c.model_dim,
            LayerSpec::Moe(c) => c.model_dim,
            LayerSpec::Ffn(c) => c.model_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Attn(c) => c.validate(),
            LayerSpec::Moe(c) => c.validate(),
            LayerSpec::Ffn(c) => c.validate(),
        }
    }
}

fn default_head_dim() -> usize {
    64
}

fn default_n_experts() -> usize {
    32
}

/// A block genome: an ordered list of sub-layer kinds sharing one set of
/// width, gating and activation hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub layers: Vec<LayerKind>,
    pub model_dim: usize,
    pub moe_hidden_dim: usize,
    pub ffn_hidden_dim: usize,
    pub n_heads: usize,
    #[serde(default = "default_head_dim")]
    pub head_dim: usize,
    pub gating: Gating,
    pub capacity_factor: u32,
    pub activation: Activation,
    #[serde(default = "default_n_experts")]
    pub n_experts: usize,
}

impl BlockSpec {
    /// Structural validity: non-empty, token mixing present, all widths
    /// positive. Membership in a search space is checked by the space.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            bail!(Config, "a block needs at least one layer");
        }
        if !self.layers.contains(&LayerKind::Attn) {
            bail!(Config, "a block needs at least one attention layer");
        }
        let dims = [
            ("model_dim", self.model_dim),
            ("moe_hidden_dim", self.moe_hidden_dim),
            ("ffn_hidden_dim", self.ffn_hidden_dim),
            ("n_heads", self.n_heads),
            ("head_dim", self.head_dim),
            ("n_experts", self.n_experts),
        ];
        for (name, v) in dims {
            if v == 0 {
                bail!(Config, "{} must be positive", name);
            }
        }
        if self.capacity_factor == 0 {
            bail!(Config, "capacity_factor must be positive");
        }
        Ok(())
    }

    pub fn attention_config(&self) -> AttentionConfig {
        AttentionConfig {
            model_dim: self.model_dim,
            n_heads: self.n_heads,
            head_dim: self.head_dim,
        }
    }

    pub fn ffn_config(&self) -> FfnConfig {
        FfnConfig {
            model_dim: self.model_dim,
            hidden_dim: self.ffn_hidden_dim,
            activation: self.activation,
        }
    }

    pub fn moe_config(&self) -> MoeConfig {
        MoeConfig {
            model_dim: self.model_dim,
            expert_hidden_dim: self.moe_hidden_dim,
            n_experts: self.n_experts,
            gating: self.gating,
            capacity_factor: self.capacity_factor,
            activation: self.activation,
        }
    }

    pub fn layer_spec(&self, kind: LayerKind) -> LayerSpec {
        match kind {
            LayerKind::Attn => LayerSpec::Attn(self.attention_config()),
            LayerKind::Moe => LayerSpec::Moe(self.moe_config()),
            LayerKind::Ffn => LayerSpec::Ffn(self.ffn_config()),
        }
    }

    /// Resolved sub-layers in application order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|&k| self.layer_spec(k)).collect()
    }

    pub fn has_moe(&self) -> bool {
        self.layers.contains(&LayerKind::Moe)
    }
}

/// Multiplier applied to the model and hidden widths when moving a searched
/// block to a larger target scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum ScaleFactor {
    X2,
    X4,
}

impl ScaleFactor {
    pub fn value(self) -> usize {
        match self {
            ScaleFactor::X2 => 2,
            ScaleFactor::X4 => 4,
        }
    }
}

impl TryFrom<u32> for ScaleFactor {
    type Error = crate::Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            2 => Ok(ScaleFactor::X2),
            4 => Ok(ScaleFactor::X4),
            other => bail!(Config, "scale factor must be 2 or 4, got {}", other),
        }
    }
}

impl From<ScaleFactor> for u32 {
    fn from(f: ScaleFactor) -> u32 {
        f.value() as u32
    }
}

/// Multiplies `d`, `d_moe` and `d_ffn` by `factor`. Heads, gating, capacity,
/// activation and layer order are untouched. The result may lie outside the
/// search domains; scaled blocks are evaluation targets, not candidates.
pub fn scale_model_dim(block: &BlockSpec, factor: ScaleFactor) -> BlockSpec {
    let f = factor.value();
    BlockSpec {
        model_dim: block.model_dim * f,
        moe_hidden_dim: block.moe_hidden_dim * f,
        ffn_hidden_dim: block.ffn_hidden_dim * f,
        ..block.clone()
    }
}

/// The model body obtained by repeating `block` `n` times: `n * k`
/// sub-layers. Each repetition gets its own parameters when instantiated.
pub fn stack_n_times(block: &BlockSpec, n: usize) -> Result<Vec<LayerSpec>> {
    if n == 0 {
        bail!(Input, "cannot stack a block zero times");
    }
    block.validate()?;
    let one = block.layer_specs();
    let mut body = Vec::with_capacity(n * one.len());
    for _ in 0..n {
        body.extend_from_slice(&one);
    }
    Ok(body)
}

/// A full decoder-only language model: a block repeated `n_blocks` times
/// between token/position embeddings and an untied output projection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub schema_version: u32,
    pub block: BlockSpec,
    pub n_blocks: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl ModelSpec {
    pub fn new(block: BlockSpec, n_blocks: usize, vocab_size: usize, max_seq_len: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            block,
            n_blocks,
            vocab_size,
            max_seq_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                Config,
                "unsupported genome schema_version {} (expected {})",
                self.schema_version,
                SCHEMA_VERSION
            );
        }
        if self.n_blocks == 0 {
            bail!(Config, "n_blocks must be >= 1");
        }
        if self.vocab_size < 2 {
            bail!(Config, "vocab_size must be >= 2");
        }
        if self.max_seq_len == 0 {
            bail!(Config, "max_seq_len must be >= 1");
        }
        self.block.validate()
    }

    pub fn body(&self) -> Result<Vec<LayerSpec>> {
        stack_n_times(&self.block, self.n_blocks)
    }

    pub fn model_dim(&self) -> usize {
        self.block.model_dim
    }
}
