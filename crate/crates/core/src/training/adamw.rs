use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Adam moments for one parameter list.
#[derive(Clone, Debug)]
pub struct AdamW<F: Scalar> {
    pub cfg: AdamWConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(cfg: AdamWConfig, params: &[Tensor<F>]) -> Self {
        AdamW {
            cfg,
            m: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            t: 0,
        }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One decoupled-weight-decay step:
    /// `p ← p − lr·wd·p`, then `p ← p − lr·m̂/(√v̂ + eps)`.
    ///
    /// Gradients are checked before any parameter is touched, so a rejected
    /// step leaves both parameters and moments unchanged.
    pub fn step(&mut self, params: &mut [Tensor<F>], grads: &[Tensor<F>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape("adamw", format!("{} params, {} grads", params.len(), grads.len())));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape("adamw", format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape())));
            }
            if !g.all_finite() {
                return Err(Error::Numeric { op: "adamw", detail: format!("non-finite gradient in parameter {i}") });
            }
        }
        self.t += 1;
        let c = self.cfg;
        let (b1, b2) = (F::from_f64(c.beta1), F::from_f64(c.beta2));
        let bc1 = F::from_f64(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - c.beta2.powi(self.t as i32));
        let lr_f = F::from_f64(lr);
        let decay = F::one() - F::from_f64(lr * c.weight_decay);
        let eps = F::from_f64(c.eps);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let mut data = std::mem::replace(p, Tensor::zeros(vec![0])).into_data();
            for (((x, &g), m), v) in data.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x = *x * decay - lr_f * m_hat / (v_hat.sqrt() + eps);
            }
            *p = Tensor::new(g.shape().to_vec(), data)?;
        }
        Ok(())
    }
}

/// Cosine decay from `lr_max` at step 0 to `lr_min` at `total`; clamps past the end.
pub fn cosine_lr(step: u64, total: u64, lr_max: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let frac = (step.min(total) as f64) / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * frac).cos())
}
