//! Non-uniform sparse transformer blocks and the evolutionary search that
//! discovers them.
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! the filesystem, threads or the system clock lives in the `brainformer`
//! companion crate; here time enters only through the [`Clock`] trait.
//!
//! Layout:
//! - [`tensor`]: dense `f64` tensors and a reverse-mode tape.
//! - [`layers`]: causal attention, dense FFN, MoE FFN and both routers.
//! - [`model`]: the block genome, composition, stacking, scaling,
//!   parameter/FLOP accounting and the decoder-only LM.
//! - [`training`]: Adafactor, the learning-rate schedule, byte corpus and
//!   the budgeted training loop.
//! - [`search`]: the search space, regularized evolution, trials and
//!   top-k finalization.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod layers;
pub mod model;
pub mod search;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

/// Monotonic time source in seconds.
///
/// The core never reads the system clock itself; wall-clock budgets and step
/// timing go through this trait.
pub trait Clock {
    fn now_secs(&self) -> f64;
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_secs(&self) -> f64 {
        (**self).now_secs()
    }
}
