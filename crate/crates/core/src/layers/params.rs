use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in creation order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        tensor.set_requires_grad(true);
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Adds a tensor filled from `U(-a, a)` with `a = sqrt(3 / fan_in)`,
    /// i.e. unit-variance signal propagation through a linear map.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = libm::sqrt(3.0 / fan_in as f64);
        let numel = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Ok(self.add(name, Tensor::new(shape.to_vec(), data)?))
    }

    pub fn add_filled(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        value: f64,
    ) -> Result<ParamId> {
        let numel = shape.iter().product();
        Ok(self.add(
            name,
            Tensor::new(shape.to_vec(), alloc::vec![value; numel])?,
        ))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Binds parameter `id` on `tape`.
    pub fn bind(&self, tape: &mut Tape, id: ParamId) -> Var {
        tape.bind_param(id.0, &self.tensors[id.0])
    }

    /// Adds the tape's gradients for every bound parameter into the store.
    pub fn harvest_grads(&mut self, tape: &Tape) -> Result<()> {
        for (key, var) in tape.bound_params() {
            if key >= self.tensors.len() {
                bail!(Usage, "tape bound unknown parameter key {}", key);
            }
            if let Some(g) = tape.grad(var) {
                self.tensors[key].accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Replaces the values of `id`, keeping its shape.
    pub fn set_values(&mut self, id: ParamId, values: &[f64]) -> Result<()> {
        let t = &mut self.tensors[id.0];
        if values.len() != t.numel() {
            bail!(
                Dimension,
                "{} values for parameter '{}' of {}",
                values.len(),
                self.names[id.0],
                t.numel()
            );
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }
}
