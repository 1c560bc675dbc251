use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{compose_block, Block, LAYER_NORM_EPS};
use super::spec::ModelSpec;
use crate::error::{bail, Result};
use crate::layers::{ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Name prefixes of the parameters counted as embeddings: token and position
/// tables plus the untied output projection.
pub const EMBEDDING_PARAM_PREFIXES: [&str; 2] = ["embed.", "output."];

/// Decoder-only language model built from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub token_embed: ParamId,
    pub pos_embed: ParamId,
    pub blocks: Vec<Block>,
    pub final_gain: ParamId,
    pub final_bias: ParamId,
    pub output: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct LmForward {
    /// `[L, V]`
    pub logits: Var,
    /// Sum of the MoE auxiliary losses of every layer.
    pub aux_loss: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LmLoss {
    /// `cross_entropy + aux_coeff * aux_loss`
    pub total: Var,
    pub cross_entropy: Var,
    pub aux_loss: Var,
}

impl LanguageModel {
    /// Builds the model with parameters drawn from a ChaCha stream seeded by
    /// `seed`; equal seeds give bitwise-equal models.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = spec.model_dim();
        let v = spec.vocab_size;
        let token_embed = params.add_uniform("embed.tokens", &[v, d], d, &mut rng)?;
        let pos_embed =
            params.add_uniform("embed.positions", &[spec.max_seq_len, d], d, &mut rng)?;
        let blocks = (0..spec.n_blocks)
            .map(|b| compose_block(&spec.block, &mut params, &format!("block{b}"), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let final_gain = params.add_filled("final_norm.gain", &[d], 1.0)?;
        let final_bias = params.add_filled("final_norm.bias", &[d], 0.0)?;
        let output = params.add_uniform("output.w", &[d, v], d, &mut rng)?;
        Ok(Self {
            spec,
            params,
            token_embed,
            pos_embed,
            blocks,
            final_gain,
            final_bias,
            output,
        })
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            bail!(Input, "empty token sequence");
        }
        if tokens.len() > self.spec.max_seq_len {
            bail!(
                Input,
                "sequence of {} tokens exceeds max_seq_len {}",
                tokens.len(),
                self.spec.max_seq_len
            );
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.spec.vocab_size) {
            bail!(
                Input,
                "token id {} outside vocabulary of {}",
                bad,
                self.spec.vocab_size
            );
        }
        Ok(())
    }

    /// Embeds, runs every block, applies the final norm and projects to
    /// vocabulary logits.
    pub fn forward(&self, tape: &mut Tape, tokens: &[usize]) -> Result<LmForward> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let table = p.bind(tape, self.token_embed);
        let positions = p.bind(tape, self.pos_embed);
        let tok = tape.gather_rows(table, tokens)?;
        let idx: Vec<usize> = (0..tokens.len()).collect();
        let pos = tape.gather_rows(positions, &idx)?;
        let mut h = tape.add(tok, pos)?;
        let mut aux: Option<Var> = None;
        for block in &self.blocks {
            let (next, a) = block.forward(tape, p, h)?;
            h = next;
            aux = Some(match aux {
                Some(acc) => tape.add(acc, a)?,
                None => a,
            });
        }
        let aux_loss = aux.expect("n_blocks >= 1");
        let g = p.bind(tape, self.final_gain);
        let b = p.bind(tape, self.final_bias);
        let h = tape.layer_norm(h, g, b, LAYER_NORM_EPS)?;
        let w = p.bind(tape, self.output);
        let logits = tape.matmul(h, w)?;
        Ok(LmForward { logits, aux_loss })
    }

    /// Next-token objective on one sequence.
    pub fn loss(
        &self,
        tape: &mut Tape,
        inputs: &[usize],
        targets: &[usize],
        aux_coeff: f64,
    ) -> Result<LmLoss> {
        if inputs.len() != targets.len() {
            bail!(
                Dimension,
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            );
        }
        let out = self.forward(tape, inputs)?;
        let cross_entropy = tape.cross_entropy(out.logits, targets)?;
        let scaled = tape.scale(out.aux_loss, aux_coeff);
        let total = tape.add(cross_entropy, scaled)?;
        Ok(LmLoss {
            total,
            cross_entropy,
            aux_loss: out.aux_loss,
        })
    }

    /// Forward pass without gradient bookkeeping: `(logits [L, V], aux)`.
    pub fn lm_forward(&self, tokens: &[usize]) -> Result<(Tensor, f64)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, tokens)?;
        let aux = tape.value(out.aux_loss).data()[0];
        Ok((tape.value(out.logits).clone(), aux))
    }

    pub fn is_embedding_param(name: &str) -> bool {
        EMBEDDING_PARAM_PREFIXES.iter().any(|p| name.starts_with(p))
    }
}
