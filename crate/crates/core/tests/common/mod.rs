//! Independent oracles shared by the integration tests: central finite
//! differences, brute-force routers, a tensor-shape enumeration of a model
//! and random genome generators.

#![allow(dead_code)]

use brainformer_core::layers::{Gating, ParamStore};
use brainformer_core::model::{BlockSpec, LayerKind, ModelSpec};
use brainformer_core::tensor::{Activation, Tape, Tensor, Var};
use brainformer_core::Result;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so gradients that are zero up
/// to round-off compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl GradReport {
    fn note(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = rel_err(analytic, numeric);
        if e > self.max_rel_err || self.worst.is_empty() {
            self.max_rel_err = self.max_rel_err.max(e);
            if e >= self.max_rel_err {
                self.worst = format!("{} analytic {analytic:e} numeric {numeric:e}", what());
            }
        }
    }
}

/// Compares the tape gradient of the scalar `f(x)` with central differences
/// for every parameter in `store` and every element of `x`.
pub fn check_gradients<F>(store: &mut ParamStore, x: &Tensor, f: F) -> GradReport
where
    F: Fn(&mut Tape, &ParamStore, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone().with_requires_grad(true));
    let loss = f(&mut tape, store, xv).unwrap();
    tape.backward(loss).unwrap();
    store.zero_grads();
    store.harvest_grads(&tape).unwrap();
    let gx = tape
        .grad(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |store: &ParamStore, x: &Tensor| {
        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let l = f(&mut t, store, xv).unwrap();
        t.value(l).data()[0]
    };

    let mut report = GradReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).numel();
        let analytic = store
            .get(id)
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; n]);
        for i in 0..n {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + FD_STEP;
            let up = eval(store, x);
            store.get_mut(id).data_mut()[i] = orig - FD_STEP;
            let down = eval(store, x);
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            report.note(|| format!("{}[{i}]", store.name(id)), analytic[i], numeric);
        }
    }
    let mut xp = x.clone();
    for i in 0..x.numel() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let up = eval(store, &xp);
        xp.data_mut()[i] = orig - FD_STEP;
        let down = eval(store, &xp);
        xp.data_mut()[i] = orig;
        report.note(|| format!("x[{i}]"), gx[i], (up - down) / (2.0 * FD_STEP));
    }
    report
}

/// `sum(y * r)` for a fixed random `r`, a scalar whose gradient reaches
/// every element of `y` with a different weight.
pub fn project(tape: &mut Tape, y: Var, r: &Tensor) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let p = tape.mul(y, rv)?;
    Ok(tape.sum(p))
}

/// Experts ordered by descending score, ties to the lower index, via a
/// stable sort.
fn ranked(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
    idx
}

/// Brute-force simulation of greedy top-2 routing in token order:
/// `(token, expert, weight)` in the order they are accepted.
pub fn top2_oracle(scores: &[Vec<f64>], capacity: usize) -> Vec<(usize, usize, f64)> {
    let e = scores.first().map_or(0, Vec::len);
    let mut load = vec![0usize; e];
    let mut out = Vec::new();
    for (t, row) in scores.iter().enumerate() {
        for &ex in ranked(row).iter().take(2.min(e)) {
            if load[ex] < capacity {
                load[ex] += 1;
                out.push((t, ex, row[ex]));
            }
        }
    }
    out
}

/// Expert-choice routing by sorting each expert's column:
/// `(token, expert, weight)` grouped by expert.
pub fn expert_choice_oracle(scores: &[Vec<f64>], capacity: usize) -> Vec<(usize, usize, f64)> {
    let e = scores.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for ex in 0..e {
        let column: Vec<f64> = scores.iter().map(|r| r[ex]).collect();
        for &t in ranked(&column).iter().take(capacity) {
            out.push((t, ex, column[t]));
        }
    }
    out
}

/// Random row-stochastic `[n, e]` scores.
pub fn random_scores<R: Rng>(rng: &mut R, n: usize, e: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..e)
                .map(|_| rng.random_range(-3.0..3.0f64).exp())
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn scores_tensor(scores: &[Vec<f64>]) -> Tensor {
    let rows: Vec<&[f64]> = scores.iter().map(Vec::as_slice).collect();
    Tensor::from_rows(&rows).unwrap()
}

/// Named tensor shapes of a model, listed from the architecture alone.
pub fn enumerate_tensors(spec: &ModelSpec) -> Vec<(String, Vec<usize>, bool)> {
    let b = &spec.block;
    let d = b.model_dim;
    let inner = b.n_heads * b.head_dim;
    let mut out: Vec<(String, Vec<usize>, bool)> = vec![
        ("embed.tokens".into(), vec![spec.vocab_size, d], true),
        ("embed.positions".into(), vec![spec.max_seq_len, d], true),
    ];
    let ffn = |out: &mut Vec<(String, Vec<usize>, bool)>, p: &str, hidden: usize, active: bool| {
        out.push((format!("{p}.w_in"), vec![d, hidden], active));
        if matches!(b.activation, Activation::GatedGelu | Activation::GatedRelu) {
            out.push((format!("{p}.w_gate"), vec![d, hidden], active));
        }
        out.push((format!("{p}.w_out"), vec![hidden, d], active));
    };
    let used = match b.gating {
        Gating::Top2 => 2,
        Gating::ExpertChoice => b.capacity_factor as usize,
    }
    .min(b.n_experts);
    for blk in 0..spec.n_blocks {
        for (i, kind) in b.layers.iter().enumerate() {
            let p = format!("block{blk}.layer{i}");
            out.push((format!("{p}.norm.gain"), vec![d], true));
            out.push((format!("{p}.norm.bias"), vec![d], true));
            match kind {
                LayerKind::Attn => {
                    for w in ["wq", "wk", "wv"] {
                        out.push((format!("{p}.attn.{w}"), vec![d, inner], true));
                    }
                    out.push((format!("{p}.attn.wo"), vec![inner, d], true));
                }
                LayerKind::Ffn => ffn(&mut out, &format!("{p}.ffn"), b.ffn_hidden_dim, true),
                LayerKind::Moe => {
                    out.push((format!("{p}.moe.w_gate"), vec![d, b.n_experts], true));
                    for e in 0..b.n_experts {
                        ffn(
                            &mut out,
                            &format!("{p}.moe.expert{e}"),
                            b.moe_hidden_dim,
                            e < used,
                        );
                    }
                }
            }
        }
    }
    out.push(("final_norm.gain".into(), vec![d], true));
    out.push(("final_norm.bias".into(), vec![d], true));
    out.push(("output.w".into(), vec![d, spec.vocab_size], true));
    out
}

/// `(total, activated, embedding)` from [`enumerate_tensors`].
pub fn oracle_counts(spec: &ModelSpec) -> (u64, u64, u64) {
    let mut total = 0u64;
    let mut active = 0u64;
    let mut embed = 0u64;
    for (name, shape, is_active) in enumerate_tensors(spec) {
        let n: u64 = shape.iter().map(|&s| s as u64).product();
        total += n;
        if is_active {
            active += n;
        }
        if name.starts_with("embed.") || name.starts_with("output.") {
            embed += n;
        }
    }
    (total, active, embed)
}

pub fn pick<R: Rng, T: Copy>(rng: &mut R, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// A random structurally valid block with small widths.
pub fn random_small_block<R: Rng>(rng: &mut R) -> BlockSpec {
    let k = rng.random_range(1..=6);
    let mut layers: Vec<LayerKind> = (0..k)
        .map(|_| pick(rng, &[LayerKind::Attn, LayerKind::Ffn, LayerKind::Moe]))
        .collect();
    if !layers.contains(&LayerKind::Attn) {
        let i = rng.random_range(0..k);
        layers[i] = LayerKind::Attn;
    }
    BlockSpec {
        layers,
        model_dim: pick(rng, &[4, 8, 12, 16]),
        moe_hidden_dim: pick(rng, &[4, 8, 16, 24]),
        ffn_hidden_dim: pick(rng, &[4, 8, 16, 24]),
        n_heads: rng.random_range(1..=4),
        head_dim: pick(rng, &[2, 4, 8]),
        gating: pick(rng, &Gating::ALL),
        capacity_factor: rng.random_range(1..=4),
        activation: pick(rng, &Activation::ALL),
        n_experts: rng.random_range(1..=8),
    }
}
