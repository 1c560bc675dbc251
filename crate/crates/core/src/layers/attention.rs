use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore};
use crate::error::{bail, Result};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub n_heads: usize,
    pub head_dim: usize,
}

impl AttentionConfig {
    /// Width of the q/k/v projections, `n_heads * head_dim`. It need not
    /// equal `model_dim`; the output projection maps back.
    pub fn inner_dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.n_heads == 0 || self.head_dim == 0 {
            bail!(Config, "attention dims must be positive: {:?}", self);
        }
        Ok(())
    }

    /// Trainable scalars: three input projections and one output projection.
    pub fn param_count(&self) -> usize {
        4 * self.model_dim * self.inner_dim()
    }
}

/// Multi-head causal self-attention without projection biases.
#[derive(Debug, Clone)]
pub struct Attention {
    pub cfg: AttentionConfig,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl Attention {
    pub fn init<R: Rng + ?Sized>(
        cfg: AttentionConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let (d, w) = (cfg.model_dim, cfg.inner_dim());
        Ok(Self {
            cfg,
            wq: store.add_uniform(format!("{prefix}.wq"), &[d, w], d, rng)?,
            wk: store.add_uniform(format!("{prefix}.wk"), &[d, w], d, rng)?,
            wv: store.add_uniform(format!("{prefix}.wv"), &[d, w], d, rng)?,
            wo: store.add_uniform(format!("{prefix}.wo"), &[w, d], w, rng)?,
        })
    }

    /// `x[L, d] -> [L, d]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let wq = store.bind(tape, self.wq);
        let wk = store.bind(tape, self.wk);
        let wv = store.bind(tape, self.wv);
        let wo = store.bind(tape, self.wo);
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let heads = tape.causal_attention(q, k, v, self.cfg.n_heads)?;
        tape.matmul(heads, wo)
    }
}
