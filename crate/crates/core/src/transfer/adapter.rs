//! Residual adapter over frozen base features plus a linear classification head.
//!
//! `a = L x + U relu(V x + c)`, `z = a / |a|`, `logits = H z + h`.
//! `L` starts as the identity and `U` at zero, so an untrained adapter maps
//! each input to its normalized self.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::l2_normalize_backward;
use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::nn::{relu_backward_inplace, relu_inplace, Dense};
use crate::rng::RngStream;

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdapterConfig {
    /// Output width; `None` keeps the input width.
    pub out_dim: Option<usize>,
    /// Width of the rectified residual branch.
    pub hidden: usize,
    /// Standard deviation of the classification head's initial weights.
    pub head_init_std: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            out_dim: None,
            hidden: 32,
            head_init_std: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdapterModel {
    pub linear: Dense,
    pub down: Dense,
    pub up: Dense,
    pub head: Dense,
}

/// Same layout as [`AdapterModel`].
pub type AdapterGrads = AdapterModel;

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct AdapterTrace {
    pub hidden: Vec<f64>,
    pub pre_norm: f64,
    pub feature: Vec<f64>,
    pub logits: Vec<f64>,
}

impl AdapterModel {
    pub fn new(input: usize, classes: usize, cfg: &AdapterConfig, stream: &RngStream) -> Result<Self> {
        if input == 0 || classes == 0 || cfg.hidden == 0 {
            return Err(Error::config("transfer.adapter", "widths must be positive"));
        }
        let out = cfg.out_dim.unwrap_or(input);
        if out == 0 {
            return Err(Error::config("transfer.adapter.out_dim", "must be positive"));
        }
        let mut rng = stream.derive("adapter").rng();
        let linear = Dense {
            weight: Matrix::eye(out, input),
            bias: vec![0.0; out],
        };
        let down = Dense::gaussian(input, cfg.hidden, libm::sqrt(2.0 / input as f64), &mut rng);
        let up = Dense::zeros(cfg.hidden, out);
        let mut model = Self {
            linear,
            down,
            up,
            head: Dense::zeros(out, classes),
        };
        model.reset_head(cfg.head_init_std, &stream.derive("head"));
        Ok(model)
    }

    /// Fresh head weights, adapter untouched.
    pub fn reset_head(&mut self, std: f64, stream: &RngStream) {
        let mut rng = stream.rng();
        self.head = Dense::gaussian(self.out_dim(), self.classes(), std, &mut rng);
    }

    pub fn input_dim(&self) -> usize {
        self.linear.input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.output_dim()
    }

    pub fn classes(&self) -> usize {
        self.head.output_dim()
    }

    fn zeros_like(&self) -> AdapterGrads {
        Self {
            linear: Dense::zeros(self.linear.input_dim(), self.linear.output_dim()),
            down: Dense::zeros(self.down.input_dim(), self.down.output_dim()),
            up: Dense::zeros(self.up.input_dim(), self.up.output_dim()),
            head: Dense::zeros(self.head.input_dim(), self.head.output_dim()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.is_finite() && self.down.is_finite() && self.up.is_finite() && self.head.is_finite()
    }

    pub(crate) fn adapter_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(6);
        for l in [&mut self.linear, &mut self.down, &mut self.up] {
            v.extend(l.tensors_mut());
        }
        v
    }

    pub(crate) fn adapter_tensors(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(6);
        for l in [&self.linear, &self.down, &self.up] {
            v.extend(l.tensors());
        }
        v
    }

    pub(crate) fn head_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.head.tensors_mut().into()
    }

    pub(crate) fn head_tensors(&self) -> Vec<&[f64]> {
        self.head.tensors().into()
    }

    /// All parameters flattened: linear, down, up, head (weights before biases).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.adapter_tensors().into_iter().chain(self.head_tensors()) {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.params().len();
        if flat.len() != total {
            return Err(Error::shape(format!("expected {total} parameters, got {}", flat.len())));
        }
        let mut off = 0;
        for l in [&mut self.linear, &mut self.down, &mut self.up, &mut self.head] {
            for t in l.tensors_mut() {
                t.copy_from_slice(&flat[off..off + t.len()]);
                off += t.len();
            }
        }
        Ok(())
    }

    /// Adapter feature (unit norm) and intermediates for one input.
    pub fn trace(&self, x: &[f64]) -> AdapterTrace {
        let mut hidden = vec![0.0; self.down.output_dim()];
        self.down.forward_into(x, &mut hidden);
        relu_inplace(&mut hidden);
        let mut a = vec![0.0; self.out_dim()];
        self.linear.forward_into(x, &mut a);
        let mut r = vec![0.0; self.out_dim()];
        self.up.forward_into(&hidden, &mut r);
        for (ai, ri) in a.iter_mut().zip(&r) {
            *ai += ri;
        }
        let n = norm(&a).max(MIN_NORM);
        a.iter_mut().for_each(|v| *v /= n);
        let mut logits = vec![0.0; self.classes()];
        self.head.forward_into(&a, &mut logits);
        AdapterTrace {
            hidden,
            pre_norm: n,
            feature: a,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).logits
    }

    /// Argmax of the head output; the lowest class wins ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy over `(input, class)` pairs and its gradient.
pub fn cross_entropy_grad(
    model: &AdapterModel,
    batch: &[(&[f64], usize)],
) -> Result<(f64, AdapterGrads)> {
    if batch.is_empty() {
        return Err(Error::Contract("cross-entropy of an empty batch".into()));
    }
    let mut g = model.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(x, y) in batch {
        if x.len() != model.input_dim() {
            return Err(Error::shape("input width does not match the adapter"));
        }
        if y >= model.classes() {
            return Err(Error::Data(format!("class {y} out of range")));
        }
        let t = model.trace(x);
        let max = t.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = t.logits.iter().map(|l| libm::exp(l - max)).sum();
        let lse = max + libm::log(sum);
        loss += (lse - t.logits[y]) * scale;

        let mut dlogits: Vec<f64> = t.logits.iter().map(|l| libm::exp(l - lse) * scale).collect();
        dlogits[y] -= scale;

        let mut dz = vec![0.0; model.out_dim()];
        model.head.backward_acc(&t.feature, &dlogits, &mut g.head, Some(&mut dz));
        let mut da = vec![0.0; model.out_dim()];
        l2_normalize_backward(&t.feature, t.pre_norm, &dz, &mut da);
        model.linear.backward_acc(x, &da, &mut g.linear, None);
        let mut dh = vec![0.0; model.up.input_dim()];
        model.up.backward_acc(&t.hidden, &da, &mut g.up, Some(&mut dh));
        relu_backward_inplace(&t.hidden, &mut dh);
        model.down.backward_acc(x, &dh, &mut g.down, None);
    }
    Ok((loss, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, "test/adapter").rng();
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn untrained_adapter_normalizes_input() {
        let m = AdapterModel::new(4, 3, &AdapterConfig::default(), &RngStream::new(1, "a")).unwrap();
        let x = [3.0, 0.0, -4.0, 0.0];
        let t = m.trace(&x);
        let expected = [0.6, 0.0, -0.8, 0.0];
        for (a, b) in t.feature.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }

    #[test]
    fn params_round_trip() {
        let mut m = AdapterModel::new(3, 2, &AdapterConfig { hidden: 4, ..AdapterConfig::default() }, &RngStream::new(2, "a")).unwrap();
        let p = random(m.params().len(), 3);
        m.set_params(&p).unwrap();
        assert_eq!(m.params(), p);
        assert!(m.set_params(&p[1..]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let cfg = AdapterConfig {
            out_dim: Some(4),
            hidden: 5,
            head_init_std: 0.5,
        };
        let mut m = AdapterModel::new(3, 3, &cfg, &RngStream::new(4, "a")).unwrap();
        let n = m.params().len();
        m.set_params(&random(n, 5)).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|i| random(3, 10 + i)).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
        let (_, g) = cross_entropy_grad(&m, &batch).unwrap();
        let analytic = g.params();
        let base = m.params();
        let h = 1e-5;
        for k in 0..n {
            let mut p = base.clone();
            p[k] += h;
            m.set_params(&p).unwrap();
            let plus = cross_entropy_grad(&m, &batch).unwrap().0;
            p[k] -= 2.0 * h;
            m.set_params(&p).unwrap();
            let minus = cross_entropy_grad(&m, &batch).unwrap().0;
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
            assert!(err < 1e-4, "param {k}: {} vs {numeric}", analytic[k]);
        }
    }
}
