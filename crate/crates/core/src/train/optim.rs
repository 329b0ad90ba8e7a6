use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<R> {
    pub config: AdamConfig,
    /// Updates applied so far.
    pub t: u64,
    pub first: Vec<Vec<R>>,
    pub second: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(params: &[Tensor<R>], config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            first: params.iter().map(|p| vec![R::zero(); p.numel()]).collect(),
            second: params.iter().map(|p| vec![R::zero(); p.numel()]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [Tensor<R>], grads: &[Vec<R>], lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - Float::powi(beta1, self.t as i32);
        let c2 = 1.0 - Float::powi(beta2, self.t as i32);
        let (b1, b2) = (R::from_f64(beta1), R::from_f64(beta2));
        let (one_b1, one_b2) = (R::from_f64(1.0 - beta1), R::from_f64(1.0 - beta2));
        let step = R::from_f64(lr / c1);
        let inv_c2 = R::from_f64(1.0 / c2);
        let eps = R::from_f64(eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                *pi = *pi - step * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<R: Real>(grads: &mut [Vec<R>], max_norm: f64) -> f64 {
    let norm = Float::sqrt(
        grads
            .iter()
            .flatten()
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum::<f64>(),
    );
    if norm > max_norm {
        let s = R::from_f64(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g = *g * s);
    }
    norm
}
