use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::spec::{BlockSpec, LayerSpec};
use crate::error::Result;
use crate::layers::{Attention, Ffn, Moe, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Layer-norm epsilon used by every pre-norm and the final norm.
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum LayerImpl {
    Attn(Attention),
    Moe(Moe),
    Ffn(Ffn),
}

/// One sub-layer wrapped as `x + F(LayerNorm(x))`.
#[derive(Debug, Clone)]
pub struct SubLayer {
    pub spec: LayerSpec,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    pub inner: LayerImpl,
}

impl SubLayer {
    pub fn init<R: Rng + ?Sized>(
        spec: LayerSpec,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.model_dim();
        let norm_gain = store.add_filled(format!("{prefix}.norm.gain"), &[d], 1.0)?;
        let norm_bias = store.add_filled(format!("{prefix}.norm.bias"), &[d], 0.0)?;
        let inner = match spec {
            LayerSpec::Attn(c) => {
                LayerImpl::Attn(Attention::init(c, store, &format!("{prefix}.attn"), rng)?)
            }
            LayerSpec::Moe(c) => {
                LayerImpl::Moe(Moe::init(c, store, &format!("{prefix}.moe"), rng)?)
            }
            LayerSpec::Ffn(c) => {
                LayerImpl::Ffn(Ffn::init(c, store, &format!("{prefix}.ffn"), rng)?)
            }
        };
        Ok(Self {
            spec,
            norm_gain,
            norm_bias,
            inner,
        })
    }

    /// Returns the residual output and, for MoE layers, the auxiliary loss.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
    ) -> Result<(Var, Option<Var>)> {
        let g = store.bind(tape, self.norm_gain);
        let b = store.bind(tape, self.norm_bias);
        let h = tape.layer_norm(x, g, b, LAYER_NORM_EPS)?;
        let (y, aux) = match &self.inner {
            LayerImpl::Attn(a) => (a.forward(tape, store, h)?, None),
            LayerImpl::Ffn(f) => (f.forward(tape, store, h)?, None),
            LayerImpl::Moe(m) => {
                let out = m.forward(tape, store, h)?;
                (out.output, Some(out.aux_loss))
            }
        };
        Ok((tape.add(x, y)?, aux))
    }
}

/// A composed block: sub-layers applied in order, first to last.
#[derive(Debug, Clone)]
pub struct Block {
    pub layers: Vec<SubLayer>,
}

impl Block {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        let mut aux: Option<Var> = None;
        for layer in &self.layers {
            let (next, a) = layer.forward(tape, store, h)?;
            h = next;
            if let Some(a) = a {
                aux = Some(match aux {
                    Some(acc) => tape.add(acc, a)?,
                    None => a,
                });
            }
        }
        let aux = match aux {
            Some(a) => a,
            None => tape.constant(Tensor::scalar(0.0)),
        };
        Ok((h, aux))
    }
}

/// Instantiates `spec` as a block function with fresh parameters under
/// `prefix`. The returned block yields `(activations, summed MoE aux loss)`.
pub fn compose_block<R: Rng + ?Sized>(
    spec: &BlockSpec,
    store: &mut ParamStore,
    prefix: &str,
    rng: &mut R,
) -> Result<Block> {
    spec.validate()?;
    let layers = spec
        .layer_specs()
        .into_iter()
        .enumerate()
        .map(|(i, ls)| SubLayer::init(ls, store, &format!("{prefix}.layer{i}"), rng))
        .collect::<Result<_>>()?;
    Ok(Block { layers })
}
