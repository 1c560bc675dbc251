use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{
    gelu, gelu_grad, log_sum_exp, matmul_at_into, matmul_bt_into, matmul_into, softmax_in_place,
};
use super::{Activation, Tensor};
use crate::error::{bail, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Softmax {
        x: Var,
        outer: usize,
        dim: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Relu(Var),
    Gelu(Var),
    CausalAttention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        head_dim: usize,
        scale: f64,
        probs: Vec<f64>,
    },
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    ScatterAddRows {
        x: Var,
        idx: Vec<usize>,
    },
    GatherElements {
        x: Var,
        pairs: Vec<(usize, usize)>,
    },
    MulRows {
        x: Var,
        w: Var,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass and replays it backwards.
///
/// Nodes are appended in evaluation order, so every op's inputs precede it
/// and a single reverse sweep visits each op once. A tape is built per
/// forward pass and dropped after its gradients are harvested.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    bound: BTreeMap<usize, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Records a leaf. Its `requires_grad` flag decides whether gradients
    /// are tracked for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// A constant leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    /// Binds an externally owned parameter under `key`.
    ///
    /// Binding the same key twice returns the same node, so a parameter used
    /// by several sequences of a batch accumulates one gradient.
    pub fn bind_param(&mut self, key: usize, t: &Tensor) -> Var {
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let mut copy = Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("valid tensor");
        copy.set_requires_grad(true);
        let v = self.push(copy, Op::Leaf, true);
        self.bound.insert(key, v);
        v
    }

    /// `(key, var)` for every parameter bound on this tape.
    pub fn bound_params(&self) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.bound.iter().map(|(&k, &v)| (k, v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            bail!(Dimension, "matmul inner dims {} and {} differ", k, k2);
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.data(a), self.data(b), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new([m, n], out)?, Op::Matmul { a, b, m, k, n }, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            bail!(
                Dimension,
                "{} of shapes {:?} and {:?}",
                what,
                self.shape(a),
                self.shape(b)
            );
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.data(a).iter().map(|x| x * factor).collect();
        let t = Tensor::new(self.shape(a).to_vec(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, factor), rg)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            bail!(Dimension, "softmax axis {} on rank {}", axis, shape.len());
        }
        let outer: usize = shape[..axis].iter().product();
        let dim = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.data(x);
        let mut out = src.to_vec();
        let mut slice = vec![0.0; dim];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * dim * inner + i;
                for (j, s) in slice.iter_mut().enumerate() {
                    *s = src[base + j * inner];
                }
                softmax_in_place(&mut slice);
                for (j, s) in slice.iter().enumerate() {
                    out[base + j * inner] = *s;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Softmax {
                x,
                outer,
                dim,
                inner,
            },
            rg,
        ))
    }

    /// Per-row layer normalization over the last axis followed by an affine
    /// map with `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let Some(&h) = shape.last() else {
            bail!(Dimension, "layer_norm on a scalar");
        };
        if h == 0 {
            bail!(Dimension, "layer_norm over an empty axis");
        }
        if self.shape(gain) != [h] || self.shape(bias) != [h] {
            bail!(
                Dimension,
                "layer_norm gain/bias {:?}/{:?} for last dim {}",
                self.shape(gain),
                self.shape(bias),
                h
            );
        }
        let rows = self.value(x).numel() / h;
        let src = self.data(x);
        let g = self.data(gain);
        let b = self.data(bias);
        let mut out = vec![0.0; src.len()];
        let mut xhat = vec![0.0; src.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &src[r * h..(r + 1) * h];
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let rs = 1.0 / libm::sqrt(var + eps);
            rstd[r] = rs;
            for c in 0..h {
                let xh = (row[c] - mean) * rs;
                xhat[r * h + c] = xh;
                out[r * h + c] = xh * g[c] + b[c];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| super::relu(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Relu(x), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| gelu(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Gelu(x), rg)
    }

    /// Applies `kind`. Gated kinds need the gate stream `v` and compute
    /// `act(u) * v`; ungated kinds ignore `v`.
    pub fn activation(&mut self, kind: Activation, u: Var, v: Option<Var>) -> Result<Var> {
        let a = match kind {
            Activation::Relu | Activation::GatedRelu => self.relu(u),
            Activation::Gelu | Activation::GatedGelu => self.gelu(u),
        };
        if kind.is_gated() {
            let Some(v) = v else {
                bail!(Usage, "gated activation {:?} needs a gate stream", kind);
            };
            self.mul(a, v)
        } else {
            Ok(a)
        }
    }

    /// Multi-head causal scaled dot-product attention.
    ///
    /// `q`, `k`, `v` are `[L, heads * head_dim]`; head `h` owns columns
    /// `h*head_dim..(h+1)*head_dim`. Position `i` attends to `j <= i` only;
    /// masked positions are skipped outright, so outputs at `i` never read
    /// inputs after `i`.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (l, width) = self.value(q).dims2()?;
        if self.shape(k) != [l, width] || self.shape(v) != [l, width] {
            bail!(Dimension, "attention q/k/v shapes differ");
        }
        if heads == 0 || width % heads != 0 {
            bail!(
                Dimension,
                "width {} not divisible into {} heads",
                width,
                heads
            );
        }
        let hd = width / heads;
        let scale = 1.0 / libm::sqrt(hd as f64);
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut probs = vec![0.0; heads * l * l];
        let mut out = vec![0.0; l * width];
        for h in 0..heads {
            let off = h * hd;
            for i in 0..l {
                let p = &mut probs[(h * l + i) * l..(h * l + i) * l + i + 1];
                let qi = &qd[i * width + off..i * width + off + hd];
                for (j, pj) in p.iter_mut().enumerate() {
                    let kj = &kd[j * width + off..j * width + off + hd];
                    *pj = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                }
                softmax_in_place(p);
                let oi = &mut out[i * width + off..i * width + off + hd];
                for (j, &pj) in p.iter().enumerate() {
                    let vj = &vd[j * width + off..j * width + off + hd];
                    for (o, &x) in oi.iter_mut().zip(vj) {
                        *o += pj * x;
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            Tensor::new([l, width], out)?,
            Op::CausalAttention {
                q,
                k,
                v,
                heads,
                head_dim: hd,
                scale,
                probs,
            },
            rg,
        ))
    }

    /// Rows `idx` of a 2-D tensor, in order (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if idx.is_empty() {
            bail!(Dimension, "gather_rows with no indices");
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            bail!(Input, "row index {} out of range {}", bad, rows);
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            out.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new([idx.len(), cols], out)?,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// A zero `[n_rows, cols]` tensor with row `r` of `x` added into row
    /// `idx[r]`.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &[usize], n_rows: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if rows != idx.len() {
            bail!(
                Dimension,
                "scatter of {} rows with {} indices",
                rows,
                idx.len()
            );
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_rows) {
            bail!(Input, "row index {} out of range {}", bad, n_rows);
        }
        let src = self.data(x);
        let mut out = vec![0.0; n_rows * cols];
        for (r, &dst) in idx.iter().enumerate() {
            for c in 0..cols {
                out[dst * cols + c] += src[r * cols + c];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new([n_rows, cols], out)?,
            Op::ScatterAddRows {
                x,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Picks entries `(row, col)` of a 2-D tensor into a vector.
    pub fn gather_elements(&mut self, x: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if pairs.is_empty() {
            bail!(Dimension, "gather_elements with no indices");
        }
        if pairs.iter().any(|&(r, c)| r >= rows || c >= cols) {
            bail!(Input, "element index out of range [{}, {}]", rows, cols);
        }
        let src = self.data(x);
        let out = pairs.iter().map(|&(r, c)| src[r * cols + c]).collect();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new([pairs.len()], out)?,
            Op::GatherElements {
                x,
                pairs: pairs.to_vec(),
            },
            rg,
        ))
    }

    /// Scales row `r` of `x[m, d]` by `w[r]`.
    pub fn mul_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let (m, d) = self.value(x).dims2()?;
        if self.shape(w) != [m] {
            bail!(Dimension, "row weights {:?} for {} rows", self.shape(w), m);
        }
        let (xd, wd) = (self.data(x), self.data(w));
        let out = (0..m * d).map(|i| xd[i] * wd[i / d]).collect();
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Tensor::new([m, d], out)?, Op::MulRows { x, w }, rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits[n, V]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (n, v) = self.value(logits).dims2()?;
        if targets.len() != n {
            bail!(Dimension, "{} targets for {} rows", targets.len(), n);
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            bail!(Input, "target {} outside vocabulary of {}", bad, v);
        }
        let src = self.data(logits);
        let mut probs = src.to_vec();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &src[r * v..(r + 1) * v];
            loss += log_sum_exp(row) - row[t];
            softmax_in_place(&mut probs[r * v..(r + 1) * v]);
        }
        loss /= n as f64;
        if !loss.is_finite() {
            bail!(NonFinite, "cross-entropy evaluated to {}", loss);
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Reverse sweep from a scalar `loss`, accumulating gradients into every
    /// node that requires them. Fan-out is handled by summation.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            bail!(
                Usage,
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            );
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        match &nodes[idx].op {
            Op::Leaf => {}
            &Op::Matmul { a, b, m, k, n } => {
                let (ad, bd) = (self.data(a), self.data(b));
                acc(a, &mut |ga| matmul_bt_into(g, bd, ga, m, k, n));
                acc(b, &mut |gb| matmul_at_into(ad, g, gb, m, k, n));
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            &Op::Mul(a, b) => {
                let (ad, bd) = (self.data(a), self.data(b));
                acc(a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bd[i];
                    }
                });
                acc(b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * ad[i];
                    }
                });
            }
            &Op::Scale(a, f) => acc(a, &mut |ga| {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += f * y)
            }),
            &Op::Sum(a) => acc(a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            &Op::Softmax {
                x,
                outer,
                dim,
                inner,
            } => {
                let y = nodes[idx].value.data();
                acc(x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * dim * inner + i;
                            let dot: f64 = (0..dim)
                                .map(|j| g[base + j * inner] * y[base + j * inner])
                                .sum();
                            for j in 0..dim {
                                let p = base + j * inner;
                                gx[p] += y[p] * (g[p] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let h = self.value(*gain).numel();
                let rows = rstd.len();
                let gd = self.data(*gain);
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let sl = r * h..(r + 1) * h;
                        let (gr, xr) = (&g[sl.clone()], &xhat[sl.clone()]);
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for c in 0..h {
                            let d = gr[c] * gd[c];
                            mean_d += d;
                            mean_dx += d * xr[c];
                        }
                        mean_d /= h as f64;
                        mean_dx /= h as f64;
                        for c in 0..h {
                            let d = gr[c] * gd[c];
                            gx[r * h + c] += rstd[r] * (d - mean_d - xr[c] * mean_dx);
                        }
                    }
                });
                acc(*gain, &mut |gg| {
                    for r in 0..rows {
                        for c in 0..h {
                            gg[c] += g[r * h + c] * xhat[r * h + c];
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for r in 0..rows {
                        for c in 0..h {
                            gb[c] += g[r * h + c];
                        }
                    }
                });
            }
            &Op::Relu(x) => {
                let xd = self.data(x);
                acc(x, &mut |gx| {
                    for i in 0..gx.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            &Op::Gelu(x) => {
                let xd = self.data(x);
                acc(x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * gelu_grad(xd[i]);
                    }
                });
            }
            Op::CausalAttention {
                q,
                k,
                v,
                heads,
                head_dim,
                scale,
                probs,
            } => {
                let (q, k, v, heads, hd, scale) = (*q, *k, *v, *heads, *head_dim, *scale);
                let width = heads * hd;
                let l = self.value(q).numel() / width;
                let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
                // ds[h][i][j] = p_ij * (dp_ij - sum_j' p_ij' dp_ij'), dp_ij = g_i . v_j
                let mut ds = vec![0.0; heads * l * l];
                for h in 0..heads {
                    let off = h * hd;
                    for i in 0..l {
                        let gi = &g[i * width + off..i * width + off + hd];
                        let row = (h * l + i) * l;
                        let mut dot = 0.0;
                        for j in 0..=i {
                            let vj = &vd[j * width + off..j * width + off + hd];
                            let dp: f64 = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                            ds[row + j] = dp;
                            dot += probs[row + j] * dp;
                        }
                        for j in 0..=i {
                            ds[row + j] = probs[row + j] * (ds[row + j] - dot);
                        }
                    }
                }
                acc(v, &mut |gv| {
                    for h in 0..heads {
                        let off = h * hd;
                        for i in 0..l {
                            let gi = &g[i * width + off..i * width + off + hd];
                            for j in 0..=i {
                                let p = probs[(h * l + i) * l + j];
                                for c in 0..hd {
                                    gv[j * width + off + c] += p * gi[c];
                                }
                            }
                        }
                    }
                });
                acc(q, &mut |gq| {
                    for h in 0..heads {
                        let off = h * hd;
                        for i in 0..l {
                            for j in 0..=i {
                                let s = scale * ds[(h * l + i) * l + j];
                                for c in 0..hd {
                                    gq[i * width + off + c] += s * kd[j * width + off + c];
                                }
                            }
                        }
                    }
                });
                acc(k, &mut |gk| {
                    for h in 0..heads {
                        let off = h * hd;
                        for i in 0..l {
                            for j in 0..=i {
                                let s = scale * ds[(h * l + i) * l + j];
                                for c in 0..hd {
                                    gk[j * width + off + c] += s * qd[i * width + off + c];
                                }
                            }
                        }
                    }
                });
            }
            Op::GatherRows { x, idx: rows } => {
                let cols = nodes[idx].value.shape()[1];
                acc(*x, &mut |gx| {
                    for (r, &src) in rows.iter().enumerate() {
                        for c in 0..cols {
                            gx[src * cols + c] += g[r * cols + c];
                        }
                    }
                });
            }
            Op::ScatterAddRows { x, idx: rows } => {
                let cols = nodes[idx].value.shape()[1];
                acc(*x, &mut |gx| {
                    for (r, &dst) in rows.iter().enumerate() {
                        for c in 0..cols {
                            gx[r * cols + c] += g[dst * cols + c];
                        }
                    }
                });
            }
            Op::GatherElements { x, pairs } => {
                let cols = self.shape(*x)[1];
                acc(*x, &mut |gx| {
                    for (i, &(r, c)) in pairs.iter().enumerate() {
                        gx[r * cols + c] += g[i];
                    }
                });
            }
            &Op::MulRows { x, w } => {
                let d = self.shape(x)[1];
                let (xd, wd) = (self.data(x), self.data(w));
                acc(x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * wd[i / d];
                    }
                });
                acc(w, &mut |gw| {
                    for (r, gwr) in gw.iter_mut().enumerate() {
                        *gwr += (0..d).map(|c| g[r * d + c] * xd[r * d + c]).sum::<f64>();
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let n = targets.len();
                let v = probs.len() / n;
                let s = g[0] / n as f64;
                acc(*logits, &mut |gl| {
                    for r in 0..n {
                        for c in 0..v {
                            let onehot = if c == targets[r] { 1.0 } else { 0.0 };
                            gl[r * v + c] += s * (probs[r * v + c] - onehot);
                        }
                    }
                });
            }
        }
    }
}
