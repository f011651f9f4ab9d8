use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::net::ToyNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments; the moments mirror the net's shape.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: i32,
    m: ToyNet,
    v: ToyNet,
}

impl Adam {
    pub fn new(net: &ToyNet, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: net.zeros_like(),
            v: net.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, net: &mut ToyNet, grads: &ToyNet, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let layers = net
            .layers_mut()
            .zip(grads.layers())
            .zip(self.m.layers_mut().zip(self.v.layers_mut()));
        for ((p, g), (m, v)) in layers {
            let params = p.w.iter_mut().chain(p.b.iter_mut());
            let gs = g.w.iter().chain(&g.b);
            let ms = m.w.iter_mut().chain(m.b.iter_mut());
            let vs = v.w.iter_mut().chain(v.b.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Cosine annealing from `lr0` at step 0 to `lr_min` at step `total`; held at
/// `lr_min` afterwards. The endpoints are returned exactly.
pub fn cosine_lr(step: usize, total: usize, lr0: f64, lr_min: f64) -> f64 {
    if step == 0 {
        return lr0;
    }
    if step >= total {
        return lr_min;
    }
    let phase = PI * step as f64 / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + phase.cos())
}
