//! The architecture search space and the two genome operators that draw
//! from it: independent sampling and single-site mutation.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::layers::Gating;
use crate::model::{BlockSpec, LayerKind};
use crate::tensor::Activation;

/// Redraws allowed before a space is declared unsatisfiable.
pub const MAX_DRAWS: usize = 1000;

/// Finite domains for every searchable field of a [`BlockSpec`].
///
/// `head_dim` and `n_experts` are fixed run-scale values, not searched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub block_len: Vec<usize>,
    pub layer_kinds: Vec<LayerKind>,
    pub model_dim: Vec<usize>,
    pub moe_hidden_dim: Vec<usize>,
    pub ffn_hidden_dim: Vec<usize>,
    pub n_heads: Vec<usize>,
    pub gating: Vec<Gating>,
    pub capacity_factor: Vec<u32>,
    pub activation: Vec<Activation>,
    pub head_dim: usize,
    pub n_experts: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            block_len: (4..=10).collect(),
            layer_kinds: LayerKind::ALL.to_vec(),
            model_dim: vec![512, 768, 1024],
            moe_hidden_dim: vec![1536, 2048, 3072, 4096],
            ffn_hidden_dim: vec![1536, 2048, 3072, 4096],
            n_heads: vec![12, 16, 20],
            gating: Gating::ALL.to_vec(),
            capacity_factor: vec![1, 2, 3, 4],
            activation: Activation::ALL.to_vec(),
            head_dim: 64,
            n_experts: 32,
        }
    }
}

/// A mutation site: one scalar field, the block length, or the layer list
/// (one position of which is redrawn).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    BlockLen,
    Layers,
    ModelDim,
    MoeHiddenDim,
    FfnHiddenDim,
    NHeads,
    Gating,
    CapacityFactor,
    Activation,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::BlockLen,
        Field::Layers,
        Field::ModelDim,
        Field::MoeHiddenDim,
        Field::FfnHiddenDim,
        Field::NHeads,
        Field::Gating,
        Field::CapacityFactor,
        Field::Activation,
    ];
}

fn pick<T: Copy, R: Rng + ?Sized>(domain: &[T], rng: &mut R) -> T {
    *domain.choose(rng).expect("validated non-empty domain")
}

/// A uniform draw from `domain` excluding `current`.
fn pick_other<T: Copy + PartialEq, R: Rng + ?Sized>(domain: &[T], current: T, rng: &mut R) -> T {
    let others: Vec<T> = domain.iter().copied().filter(|v| *v != current).collect();
    pick(&others, rng)
}

fn distinct<T: PartialEq>(domain: &[T]) -> usize {
    domain
        .iter()
        .enumerate()
        .filter(|(i, v)| !domain[..*i].contains(v))
        .count()
}

impl SearchSpace {
    /// Every domain collapsed to the corresponding value of `genome`. The
    /// layer-kind domain holds each kind the genome uses, so it is a single
    /// value only for single-kind blocks.
    pub fn singleton(genome: &BlockSpec) -> Self {
        let mut kinds: Vec<LayerKind> = Vec::new();
        for k in &genome.layers {
            if !kinds.contains(k) {
                kinds.push(*k);
            }
        }
        Self {
            block_len: vec![genome.layers.len()],
            layer_kinds: kinds,
            model_dim: vec![genome.model_dim],
            moe_hidden_dim: vec![genome.moe_hidden_dim],
            ffn_hidden_dim: vec![genome.ffn_hidden_dim],
            n_heads: vec![genome.n_heads],
            gating: vec![genome.gating],
            capacity_factor: vec![genome.capacity_factor],
            activation: vec![genome.activation],
            head_dim: genome.head_dim,
            n_experts: genome.n_experts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("block_len", self.block_len.len()),
            ("layer_kinds", self.layer_kinds.len()),
            ("model_dim", self.model_dim.len()),
            ("moe_hidden_dim", self.moe_hidden_dim.len()),
            ("ffn_hidden_dim", self.ffn_hidden_dim.len()),
            ("n_heads", self.n_heads.len()),
            ("gating", self.gating.len()),
            ("capacity_factor", self.capacity_factor.len()),
            ("activation", self.activation.len()),
        ];
        for (name, n) in sizes {
            if n == 0 {
                bail!(Config, "search domain `{}` is empty", name);
            }
        }
        if !self.layer_kinds.contains(&LayerKind::Attn) {
            bail!(Config, "layer_kinds must include attn");
        }
        if self.block_len.contains(&0) {
            bail!(Config, "block_len values must be positive");
        }
        if self.capacity_factor.contains(&0) {
            bail!(Config, "capacity_factor values must be positive");
        }
        let zero_dim = [
            &self.model_dim,
            &self.moe_hidden_dim,
            &self.ffn_hidden_dim,
            &self.n_heads,
        ]
        .iter()
        .any(|d| d.contains(&0));
        if zero_dim || self.head_dim == 0 || self.n_experts == 0 {
            bail!(Config, "dimensions must be positive");
        }
        Ok(())
    }

    pub fn contains(&self, g: &BlockSpec) -> bool {
        g.validate().is_ok()
            && self.block_len.contains(&g.layers.len())
            && g.layers.iter().all(|k| self.layer_kinds.contains(k))
            && self.model_dim.contains(&g.model_dim)
            && self.moe_hidden_dim.contains(&g.moe_hidden_dim)
            && self.ffn_hidden_dim.contains(&g.ffn_hidden_dim)
            && self.n_heads.contains(&g.n_heads)
            && self.gating.contains(&g.gating)
            && self.capacity_factor.contains(&g.capacity_factor)
            && self.activation.contains(&g.activation)
            && g.head_dim == self.head_dim
            && g.n_experts == self.n_experts
    }

    /// Number of distinct genomes, or `None` past `u64`.
    pub fn size(&self) -> Option<u64> {
        let kinds = distinct(&self.layer_kinds) as u64;
        let without_attn = kinds - 1;
        let mut layer_lists: u64 = 0;
        for len in self
            .block_len
            .iter()
            .enumerate()
            .filter(|(i, v)| !self.block_len[..*i].contains(v))
        {
            let n = *len.1 as u32;
            let all = kinds.checked_pow(n)?;
            layer_lists = layer_lists.checked_add(all - without_attn.pow(n))?;
        }
        let scalars = [
            distinct(&self.model_dim),
            distinct(&self.moe_hidden_dim),
            distinct(&self.ffn_hidden_dim),
            distinct(&self.n_heads),
            distinct(&self.gating),
            distinct(&self.capacity_factor),
            distinct(&self.activation),
        ];
        scalars
            .iter()
            .try_fold(layer_lists, |acc, &n| acc.checked_mul(n as u64))
    }

    /// Every genome in the space, in a fixed order. Meant for small spaces.
    pub fn enumerate(&self) -> Vec<BlockSpec> {
        fn uniq<T: Copy + PartialEq>(d: &[T]) -> Vec<T> {
            let mut out: Vec<T> = Vec::new();
            for &v in d {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
            out
        }
        let kinds = uniq(&self.layer_kinds);
        let mut lists: Vec<Vec<LayerKind>> = Vec::new();
        for len in uniq(&self.block_len) {
            for code in 0..kinds.len().pow(len as u32) {
                let mut rest = code;
                let mut layers = vec![kinds[0]; len];
                for slot in layers.iter_mut().rev() {
                    *slot = kinds[rest % kinds.len()];
                    rest /= kinds.len();
                }
                if layers.contains(&LayerKind::Attn) {
                    lists.push(layers);
                }
            }
        }
        let mut out = Vec::new();
        for layers in &lists {
            for &model_dim in &uniq(&self.model_dim) {
                for &moe_hidden_dim in &uniq(&self.moe_hidden_dim) {
                    for &ffn_hidden_dim in &uniq(&self.ffn_hidden_dim) {
                        for &n_heads in &uniq(&self.n_heads) {
                            for &gating in &uniq(&self.gating) {
                                for &capacity_factor in &uniq(&self.capacity_factor) {
                                    for &activation in &uniq(&self.activation) {
                                        out.push(BlockSpec {
                                            layers: layers.clone(),
                                            model_dim,
                                            moe_hidden_dim,
                                            ffn_hidden_dim,
                                            n_heads,
                                            head_dim: self.head_dim,
                                            gating,
                                            capacity_factor,
                                            activation,
                                            n_experts: self.n_experts,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Independent uniform draw of every field, the layer list position by
    /// position. Invalid genomes (no attention layer) are redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BlockSpec> {
        self.validate()?;
        for _ in 0..MAX_DRAWS {
            let len = pick(&self.block_len, rng);
            let layers = (0..len).map(|_| pick(&self.layer_kinds, rng)).collect();
            let g = BlockSpec {
                layers,
                model_dim: pick(&self.model_dim, rng),
                moe_hidden_dim: pick(&self.moe_hidden_dim, rng),
                ffn_hidden_dim: pick(&self.ffn_hidden_dim, rng),
                n_heads: pick(&self.n_heads, rng),
                head_dim: self.head_dim,
                gating: pick(&self.gating, rng),
                capacity_factor: pick(&self.capacity_factor, rng),
                activation: pick(&self.activation, rng),
                n_experts: self.n_experts,
            };
            if g.validate().is_ok() {
                return Ok(g);
            }
        }
        bail!(Config, "no valid genome after {} draws", MAX_DRAWS)
    }

    /// Sites with more than one value to choose from.
    pub fn mutable_fields(&self) -> Vec<Field> {
        Field::ALL
            .into_iter()
            .filter(|f| match f {
                Field::BlockLen => distinct(&self.block_len) > 1,
                Field::Layers => distinct(&self.layer_kinds) > 1,
                Field::ModelDim => distinct(&self.model_dim) > 1,
                Field::MoeHiddenDim => distinct(&self.moe_hidden_dim) > 1,
                Field::FfnHiddenDim => distinct(&self.ffn_hidden_dim) > 1,
                Field::NHeads => distinct(&self.n_heads) > 1,
                Field::Gating => distinct(&self.gating) > 1,
                Field::CapacityFactor => distinct(&self.capacity_factor) > 1,
                Field::Activation => distinct(&self.activation) > 1,
            })
            .collect()
    }

    /// Resamples one uniformly chosen site of `parent` to a different value.
    ///
    /// A block-length change truncates or extends the layer list with fresh
    /// draws. Children that fail validation are discarded and the whole
    /// mutation is redrawn. A space with no mutable site returns the parent.
    pub fn mutate<R: Rng + ?Sized>(
        &self,
        parent: &BlockSpec,
        rng: &mut R,
    ) -> Result<(BlockSpec, Field)> {
        self.validate()?;
        if !self.contains(parent) {
            bail!(Input, "parent genome is outside the search space");
        }
        let fields = self.mutable_fields();
        if fields.is_empty() {
            return Ok((parent.clone(), Field::Layers));
        }
        for _ in 0..MAX_DRAWS {
            let field = pick(&fields, rng);
            let mut g = parent.clone();
            match field {
                Field::BlockLen => {
                    let len = pick_other(&self.block_len, g.layers.len(), rng);
                    if len < g.layers.len() {
                        g.layers.truncate(len);
                    } else {
                        while g.layers.len() < len {
                            g.layers.push(pick(&self.layer_kinds, rng));
                        }
                    }
                }
                Field::Layers => {
                    let pos = rng.random_range(0..g.layers.len());
                    g.layers[pos] = pick_other(&self.layer_kinds, g.layers[pos], rng);
                }
                Field::ModelDim => g.model_dim = pick_other(&self.model_dim, g.model_dim, rng),
                Field::MoeHiddenDim => {
                    g.moe_hidden_dim = pick_other(&self.moe_hidden_dim, g.moe_hidden_dim, rng)
                }
                Field::FfnHiddenDim => {
                    g.ffn_hidden_dim = pick_other(&self.ffn_hidden_dim, g.ffn_hidden_dim, rng)
                }
                Field::NHeads => g.n_heads = pick_other(&self.n_heads, g.n_heads, rng),
                Field::Gating => g.gating = pick_other(&self.gating, g.gating, rng),
                Field::CapacityFactor => {
                    g.capacity_factor = pick_other(&self.capacity_factor, g.capacity_factor, rng)
                }
                Field::Activation => g.activation = pick_other(&self.activation, g.activation, rng),
            }
            if g.validate().is_ok() {
                return Ok((g, field));
            }
        }
        bail!(Config, "no valid mutation after {} draws", MAX_DRAWS)
    }
}
