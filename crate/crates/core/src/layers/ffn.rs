use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore};
use crate::error::{bail, Result};
use crate::tensor::{Activation, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FfnConfig {
    pub model_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl FfnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.hidden_dim == 0 {
            bail!(Config, "ffn dims must be positive: {:?}", self);
        }
        Ok(())
    }

    /// Number of `d x d_ffn` input projections (two for gated kinds).
    pub fn input_projections(&self) -> usize {
        if self.activation.is_gated() {
            2
        } else {
            1
        }
    }

    pub fn param_count(&self) -> usize {
        (self.input_projections() + 1) * self.model_dim * self.hidden_dim
    }
}

/// `d -> d_ffn -> d` feed-forward network without biases.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub cfg: FfnConfig,
    pub w_in: ParamId,
    /// Second input projection, present for gated activations.
    pub w_gate: Option<ParamId>,
    pub w_out: ParamId,
}

impl Ffn {
    pub fn init<R: Rng + ?Sized>(
        cfg: FfnConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let (d, h) = (cfg.model_dim, cfg.hidden_dim);
        let w_in = store.add_uniform(format!("{prefix}.w_in"), &[d, h], d, rng)?;
        let w_gate = if cfg.activation.is_gated() {
            Some(store.add_uniform(format!("{prefix}.w_gate"), &[d, h], d, rng)?)
        } else {
            None
        };
        let w_out = store.add_uniform(format!("{prefix}.w_out"), &[h, d], h, rng)?;
        Ok(Self {
            cfg,
            w_in,
            w_gate,
            w_out,
        })
    }

    /// `x[n, d] -> [n, d]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w_in = store.bind(tape, self.w_in);
        let u = tape.matmul(x, w_in)?;
        let gate = match self.w_gate {
            Some(id) => {
                let w = store.bind(tape, id);
                Some(tape.matmul(x, w)?)
            }
            None => None,
        };
        let a = tape.activation(self.cfg.activation, u, gate)?;
        let w_out = store.bind(tape, self.w_out);
        tape.matmul(a, w_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(cfg: FfnConfig, seed: u64) -> (ParamStore, Ffn) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ffn = Ffn::init(cfg, &mut store, "ffn", &mut rng).unwrap();
        (store, ffn)
    }

    fn run(store: &ParamStore, ffn: &Ffn, x: Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let y = ffn.forward(&mut tape, store, xv).unwrap();
        tape.value(y).data().to_vec()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        for act in Activation::ALL {
            let cfg = FfnConfig {
                model_dim: 3,
                hidden_dim: 5,
                activation: act,
            };
            let (mut store, ffn) = build(cfg, 1);
            for id in store.ids().collect::<Vec<_>>() {
                let n = store.get(id).numel();
                store.set_values(id, &vec![0.0; n]).unwrap();
            }
            let y = run(
                &store,
                &ffn,
                Tensor::new([2, 3], vec![1.0, -2.0, 3.0, 0.1, 0.2, 0.3]).unwrap(),
            );
            assert!(y.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn relu_is_transparent_on_positive_identity_path() {
        let cfg = FfnConfig {
            model_dim: 2,
            hidden_dim: 2,
            activation: Activation::Relu,
        };
        let (mut store, ffn) = build(cfg, 1);
        store.set_values(ffn.w_in, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        store.set_values(ffn.w_out, &[2.0, 1.0, 0.0, 3.0]).unwrap();
        let y = run(&store, &ffn, Tensor::new([1, 2], vec![0.5, 1.5]).unwrap());
        assert_eq!(y, vec![1.0, 0.5 + 4.5]);
    }

    #[test]
    fn matches_explicit_two_matmul_reference() {
        for act in Activation::ALL {
            let cfg = FfnConfig {
                model_dim: 3,
                hidden_dim: 4,
                activation: act,
            };
            let (store, ffn) = build(cfg, 9);
            let xs = [0.3, -1.2, 0.8, 2.0, 0.0, -0.4];
            let y = run(&store, &ffn, Tensor::new([2, 3], xs.to_vec()).unwrap());
            let w_in = store.get(ffn.w_in).data();
            let w_out = store.get(ffn.w_out).data();
            let w_gate = ffn.w_gate.map(|id| store.get(id).data());
            for r in 0..2 {
                let mut hidden = [0.0; 4];
                for (j, hj) in hidden.iter_mut().enumerate() {
                    let u: f64 = (0..3).map(|i| xs[r * 3 + i] * w_in[i * 4 + j]).sum();
                    let mut a = act.apply_scalar(u);
                    if let Some(wg) = w_gate {
                        a *= (0..3).map(|i| xs[r * 3 + i] * wg[i * 4 + j]).sum::<f64>();
                    }
                    *hj = a;
                }
                for c in 0..3 {
                    let expect: f64 = (0..4).map(|j| hidden[j] * w_out[j * 3 + c]).sum();
                    assert!((y[r * 3 + c] - expect).abs() < 1e-12);
                }
            }
        }
    }
}
