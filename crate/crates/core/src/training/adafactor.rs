//! Adafactor without a first moment.
//!
//! Matrices keep row and column sums of the squared gradient instead of a
//! full second-moment estimate; vectors and scalars keep the full estimate.
//! The decay rate is fixed rather than step dependent, so the estimate is
//! bias corrected by `1 - beta2^t`. Updates are clipped by their RMS and,
//! with `scale_parameter`, sized relative to the parameter's own RMS.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::layers::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdafactorConfig {
    pub beta2: f64,
    /// Added to squared gradients.
    pub eps1: f64,
    /// Floor on the parameter RMS used for relative step sizes.
    pub eps2: f64,
    pub clip_threshold: f64,
    pub scale_parameter: bool,
}

impl Default for AdafactorConfig {
    fn default() -> Self {
        Self {
            beta2: 0.99,
            eps1: 1e-30,
            eps2: 1e-3,
            clip_threshold: 1.0,
            scale_parameter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SecondMoment {
    Factored {
        rows: usize,
        cols: usize,
        row: Vec<f64>,
        col: Vec<f64>,
    },
    Full(Vec<f64>),
}

impl SecondMoment {
    fn for_shape(shape: &[usize]) -> Self {
        match shape {
            [r, c] => SecondMoment::Factored {
                rows: *r,
                cols: *c,
                row: vec![0.0; *r],
                col: vec![0.0; *c],
            },
            _ => SecondMoment::Full(vec![0.0; shape.iter().product()]),
        }
    }

    /// Number of stored statistics.
    pub fn len(&self) -> usize {
        match self {
            SecondMoment::Factored { row, col, .. } => row.len() + col.len(),
            SecondMoment::Full(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adafactor {
    pub cfg: AdafactorConfig,
    pub step: u64,
    pub states: Vec<SecondMoment>,
}

impl Adafactor {
    pub fn new(cfg: AdafactorConfig, params: &ParamStore) -> Self {
        let states = params
            .ids()
            .map(|id| SecondMoment::for_shape(params.get(id).shape()))
            .collect();
        Self {
            cfg,
            step: 0,
            states,
        }
    }

    /// Total optimizer statistics held; there is no first-moment buffer.
    pub fn state_len(&self) -> usize {
        self.states.iter().map(SecondMoment::len).sum()
    }

    /// Applies one update to every parameter that has a gradient, then
    /// clears the gradients.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) -> Result<()> {
        let ids: Vec<_> = params.ids().collect();
        for &id in &ids {
            if let Some(g) = params.get(id).grad() {
                if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                    bail!(
                        NonFinite,
                        "gradient of '{}' is {} at element {}",
                        params.name(id),
                        g[i],
                        i
                    );
                }
            }
        }
        self.step += 1;
        let correction = 1.0 - libm::pow(self.cfg.beta2, self.step as f64);
        for id in ids {
            let Some(grad) = params.get(id).grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let t = params.get_mut(id);
            update(
                &self.cfg,
                t.data_mut(),
                &grad,
                &mut self.states[id.index()],
                lr,
                correction,
            );
            t.zero_grad();
        }
        Ok(())
    }
}

fn rms(xs: &[f64]) -> f64 {
    libm::sqrt(xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64)
}

fn update(
    cfg: &AdafactorConfig,
    param: &mut [f64],
    grad: &[f64],
    state: &mut SecondMoment,
    lr: f64,
    correction: f64,
) {
    let b = cfg.beta2;
    let mut u = vec![0.0; grad.len()];
    match state {
        SecondMoment::Factored {
            rows,
            cols,
            row,
            col,
        } => {
            let (r, c) = (*rows, *cols);
            let mut row_sum = vec![0.0; r];
            let mut col_sum = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    let g2 = grad[i * c + j] * grad[i * c + j] + cfg.eps1;
                    row_sum[i] += g2;
                    col_sum[j] += g2;
                }
            }
            for i in 0..r {
                row[i] = b * row[i] + (1.0 - b) * row_sum[i];
            }
            for j in 0..c {
                col[j] = b * col[j] + (1.0 - b) * col_sum[j];
            }
            let total: f64 = row.iter().sum();
            for i in 0..r {
                for j in 0..c {
                    let v = row[i] * col[j] / total / correction;
                    u[i * c + j] = grad[i * c + j] / libm::sqrt(v);
                }
            }
        }
        SecondMoment::Full(v) => {
            for i in 0..grad.len() {
                v[i] = b * v[i] + (1.0 - b) * (grad[i] * grad[i] + cfg.eps1);
                u[i] = grad[i] / libm::sqrt(v[i] / correction);
            }
        }
    }
    let clip = (rms(&u) / cfg.clip_threshold).max(1.0);
    let alpha = if cfg.scale_parameter {
        lr * rms(param).max(cfg.eps2)
    } else {
        lr
    };
    for (p, ui) in param.iter_mut().zip(&u) {
        *p -= alpha * ui / clip;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with(shape: &[usize], values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::new(shape.to_vec(), values.to_vec()).unwrap());
        s
    }

    #[test]
    fn scalar_reduces_to_grad_over_root_second_moment() {
        let cfg = AdafactorConfig {
            scale_parameter: false,
            clip_threshold: f64::INFINITY,
            ..Default::default()
        };
        let mut s = store_with(&[], &[1.0]);
        let mut opt = Adafactor::new(cfg, &s);
        let id = s.ids().next().unwrap();
        s.get_mut(id).accumulate_grad(&[0.5]).unwrap();
        opt.step(&mut s, 0.1).unwrap();
        // v = (1 - b) g^2, v_hat = v / (1 - b) = g^2: the step is lr * sign(g)
        assert!((s.get(id).data()[0] - 0.9).abs() < 1e-12);
        s.get_mut(id).accumulate_grad(&[0.25]).unwrap();
        opt.step(&mut s, 0.1).unwrap();
        let v = 0.99 * 0.01 * 0.25 + 0.01 * 0.0625;
        let v_hat = v / (1.0 - 0.99f64 * 0.99);
        let expect = 0.9 - 0.1 * 0.25 / libm::sqrt(v_hat);
        assert!((s.get(id).data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_state() {
        let mut s = store_with(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let mut opt = Adafactor::new(AdafactorConfig::default(), &s);
        let id = s.ids().next().unwrap();
        s.get_mut(id)
            .accumulate_grad(&[1.0, -1.0, 0.5, 2.0])
            .unwrap();
        opt.step(&mut s, 0.01).unwrap();
        let before_state = opt.states[0].clone();
        let before = s.get(id).data().to_vec();
        s.get_mut(id).accumulate_grad(&[0.0; 4]).unwrap();
        opt.step(&mut s, 0.01).unwrap();
        assert_eq!(s.get(id).data(), before.as_slice());
        let (SecondMoment::Factored { row: r0, .. }, SecondMoment::Factored { row: r1, .. }) =
            (&before_state, &opt.states[0])
        else {
            panic!("matrix state must be factored");
        };
        for (a, b) in r0.iter().zip(r1) {
            assert!(b < a);
        }
    }

    #[test]
    fn no_first_moment_state() {
        let mut s = ParamStore::new();
        s.add("m", Tensor::zeros([3, 5]).unwrap());
        s.add("v", Tensor::zeros([7]).unwrap());
        let opt = Adafactor::new(AdafactorConfig::default(), &s);
        assert_eq!(opt.state_len(), 3 + 5 + 7);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut s = store_with(&[2], &[1.0, 1.0]);
        let mut opt = Adafactor::new(AdafactorConfig::default(), &s);
        let id = s.ids().next().unwrap();
        s.get_mut(id).accumulate_grad(&[1.0, f64::NAN]).unwrap();
        let err = opt.step(&mut s, 0.1).unwrap_err();
        assert!(matches!(err, crate::Error::NonFinite(ref m) if m.contains("'p'")));
        assert_eq!(s.get(id).data(), &[1.0, 1.0]);
    }
}
