//! Affine layers and SGD with momentum, shared by the encoder and the adapter.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::matrix::{axpy, Matrix};

/// `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Gaussian weights with the given standard deviation, zero bias.
    pub fn gaussian<R: Rng>(input: usize, output: usize, std: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input, output);
        if std > 0.0 {
            let dist = Normal::new(0.0, std).expect("positive std");
            layer
                .weight
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = dist.sample(rng));
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        self.weight.mul_vec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    /// Accumulates parameter gradients for one sample and, if requested,
    /// adds `W^T g` to `grad_input`.
    pub fn backward_acc(
        &self,
        x: &[f64],
        g: &[f64],
        grad: &mut Dense,
        grad_input: Option<&mut [f64]>,
    ) {
        grad.weight.rank1_acc(1.0, g, x);
        axpy(1.0, g, &mut grad.bias);
        if let Some(gi) = grad_input {
            self.weight.mul_t_vec_acc(g, gi);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), &mut self.bias]
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), &self.bias]
    }
}

/// Heavy-ball SGD: `v = mu v + g; p -= lr v`. No weight decay.
#[derive(Debug, Clone, Default)]
pub struct Momentum {
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: Vec::new(),
        }
    }

    /// `params` and `grads` must list tensors in the same order every call.
    pub fn step(&mut self, lr: f64, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *pi -= lr * *vi;
            }
        }
    }
}

#[inline]
pub(crate) fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `g` by the rectifier derivative, given the rectifier's output.
#[inline]
pub(crate) fn relu_backward_inplace(activated: &[f64], g: &mut [f64]) {
    for (gi, a) in g.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *gi = 0.0;
        }
    }
}

/// Cosine learning-rate decay from `base` at step 0 to 0 at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = step as f64 / total as f64;
    base * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_matches_hand_rollout() {
        let mut p = vec![1.0];
        let mut opt = Momentum::new(0.9);
        opt.step(0.1, &mut [&mut p], &[&[1.0]]);
        assert!((p[0] - 0.9).abs() < 1e-15);
        opt.step(0.1, &mut [&mut p], &[&[1.0]]);
        // v = 0.9 + 1 = 1.9
        assert!((p[0] - (0.9 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut p = vec![0.3, -2.0];
        let mut opt = Momentum::new(0.9);
        opt.step(0.0, &mut [&mut p], &[&[5.0, 1.0]]);
        assert_eq!(p, vec![0.3, -2.0]);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0.5, 0, 10), 0.5);
        assert!(cosine_lr(0.5, 10, 10).abs() < 1e-15);
        assert!((cosine_lr(0.5, 5, 10) - 0.25).abs() < 1e-15);
    }
}
