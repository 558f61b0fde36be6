//! Adam with bias correction, updating parameters in place.

use crate::error::{Result, SgrError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-parameter first/second moment state plus the step counter.
pub struct AdamState {
    pub cfg: AdamConfig,
    t: u64,
    slots: Vec<Moments>,
    shapes: Vec<Vec<usize>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], cfg: AdamConfig) -> AdamState {
        AdamState {
            cfg,
            t: 0,
            slots: params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.numel()],
                    v: vec![0.0; p.numel()],
                })
                .collect(),
            shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step over `params`, reading each tensor's
    /// accumulated gradient (params without a gradient are treated as
    /// having zero gradient). The caller clears gradients afterwards.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.slots.len() {
            return Err(SgrError::Dimension(format!(
                "optimizer tracks {} parameters, got {}",
                self.slots.len(),
                params.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, slot), shape) in params.iter().zip(&mut self.slots).zip(&self.shapes) {
            if p.shape() != shape.as_slice() {
                return Err(SgrError::Dimension(format!(
                    "parameter shape {:?} does not match optimizer state {:?}",
                    p.shape(),
                    shape
                )));
            }
            let grad = match p.grad() {
                Some(g) => g,
                None => continue, // params outside the loss (e.g. toggled-off stages)
            };
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(SgrError::Numeric("non-finite gradient in adam step".into()));
            }
            for (i, &g) in grad.iter().enumerate() {
                slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g;
                slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g * g;
            }
            let m = &slot.m;
            let v = &slot.v;
            p.update_data(|data| {
                for i in 0..data.len() {
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    data[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                }
            })?;
        }
        Ok(())
    }
}
