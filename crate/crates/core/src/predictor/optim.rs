//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// Cosine decay from `lr0` at step 0 to exactly 0 at step `total - 1`, no warmup.
pub fn cosine_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return lr0;
    }
    let t = step.min(total - 1) as f64 / (total - 1) as f64;
    // cos(pi) is not exactly -1 in floating point; pin the endpoint.
    if step + 1 >= total {
        return 0.0;
    }
    lr0 * 0.5 * (1.0 + (core::f64::consts::PI * t).cos())
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update of `params[range]`:
    /// `w -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, range: Range<usize>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in range {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}
