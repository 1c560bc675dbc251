//! Dense row-major `f64` tensors and a minimal reverse-mode tape.

mod kernels;
mod tape;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub use kernels::{gelu, gelu_grad, log_sum_exp, matmul_into, relu};
pub use tape::{Tape, Var};

/// A dense, row-major tensor of `f64` values.
///
/// A tensor with an empty shape is a scalar holding one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            bail!(Dimension, "shape {:?} has a zero dimension", shape);
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            bail!(
                Dimension,
                "shape {:?} needs {} values, got {}",
                shape,
                numel,
                data.len()
            );
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self::new(shape, vec![0.0; numel])
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Builds a 2-D tensor from equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            bail!(Dimension, "from_rows needs at least one row");
        };
        let cols = first.len();
        if rows.iter().any(|r| r.len() != cols) {
            bail!(Dimension, "ragged rows");
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new([rows.len(), cols], data)
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer, creating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            bail!(
                Dimension,
                "gradient of length {} for tensor of {} values",
                g.len(),
                self.data.len()
            );
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Element `(r, c)` of a 2-D tensor.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(rows, cols)` of a 2-D tensor, or a dimension error.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => bail!(Dimension, "expected a 2-D tensor, got shape {:?}", s),
        }
    }
}

/// Elementwise nonlinearity used by dense and expert FFNs.
///
/// Gated kinds are applied to a pair of pre-activation streams `(u, v)` and
/// compute `act(u) * v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
    GatedRelu,
    GatedGelu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::GatedRelu,
        Activation::GatedGelu,
        Activation::Relu,
        Activation::Gelu,
    ];

    pub fn is_gated(self) -> bool {
        matches!(self, Activation::GatedRelu | Activation::GatedGelu)
    }

    /// Scalar form of the underlying (ungated) nonlinearity.
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Relu | Activation::GatedRelu => relu(x),
            Activation::Gelu | Activation::GatedGelu => gelu(x),
        }
    }
}

/// Indices of the `k` largest values of `scores`, largest first.
///
/// Ties go to the lower index, so the result is fully deterministic.
pub fn top_k_indices(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        bail!(Input, "top-{} requested from a row of {}", k, scores.len());
    }
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    // Repeated selection keeps the tie rule obvious; rows here are short.
    let mut taken = vec![false; scores.len()];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if scores[b] >= s => {}
                _ => best = Some(i),
            }
        }
        let b = best.expect("k <= len");
        taken[b] = true;
        picked.push(b);
    }
    Ok(picked)
}
