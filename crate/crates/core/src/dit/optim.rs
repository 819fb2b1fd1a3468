use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: Some(1.0),
        }
    }
}

/// Decoupled-weight-decay Adam with moments stored per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    m: ParamStore<T>,
    v: ParamStore<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &ParamStore<T>) -> Self {
        AdamW {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr` (overrides the configured value).
    pub fn step_with_lr(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>, lr: f64) {
        self.step += 1;
        let c = self.config;
        let clip = match c.clip_norm {
            Some(max) => {
                let n = grads.global_norm();
                if n > max {
                    max / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let clip = T::from_f64(clip);
        let step_size = T::from_f64(lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(c.eps);
        let decay = T::from_f64(1.0 - lr * c.weight_decay);
        let tensors = params.tensors_mut();
        for (i, p) in tensors.iter_mut().enumerate() {
            let g = &grads.tensors()[i].data;
            let m = &mut self.m.tensors_mut()[i].data;
            let v = &mut self.v.tensors_mut()[i].data;
            for j in 0..p.data.len() {
                let gj = g[j] * clip;
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                let denom = (v[j] * inv_bc2).sqrt() + eps;
                p.data[j] = p.data[j] * decay - step_size * m[j] / denom;
            }
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) {
        let lr = self.config.lr;
        self.step_with_lr(params, grads, lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mat;

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamStore::<f64>::default();
        p.add("x", Mat::from_vec(1, 2, vec![3.0, -2.0]));
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.05,
                clip_norm: None,
                ..AdamWConfig::default()
            },
            &p,
        );
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            for j in 0..2 {
                g.tensors_mut()[0].data[j] = 2.0 * p.tensors()[0].data[j];
            }
            opt.step(&mut p, &g);
        }
        assert!(p.tensors()[0].data.iter().all(|v| v.abs() < 1e-3));
    }
}
