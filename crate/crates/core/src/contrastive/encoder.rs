//! Small rectifier MLP whose outputs are L2-normalized.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::l2_normalize_backward;
use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::nn::{relu_backward_inplace, relu_inplace, Dense, Momentum};
use crate::rng::RngStream;

/// Floor applied to pre-normalization norms so a dead network cannot divide by zero.
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderMLP {
    layers: Vec<Dense>,
    generation: u64,
}

/// Activations recorded by [`encoder_forward`].
#[derive(Debug, Clone)]
pub struct EncoderCache {
    generation: u64,
    /// Input of every layer; `activations[0]` is the batch itself.
    activations: Vec<Matrix>,
    output: Matrix,
    norms: Vec<f64>,
}

/// Parameter gradients, one [`Dense`] per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Dense>,
}

impl EncoderMLP {
    /// Widths `[input, hidden.., output]`, He-initialized from `stream`.
    pub fn new(widths: &[usize], stream: &RngStream) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::config(
                "encoder.widths",
                "need at least input and output widths, all positive",
            ));
        }
        let mut rng = stream.rng();
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { 1.0 } else { 2.0 };
                Dense::gaussian(w[0], w[1], libm::sqrt(gain / w[0] as f64), &mut rng)
            })
            .collect();
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    /// Single affine layer `W = I`, `b = 0`.
    pub fn identity(dim: usize) -> Self {
        Self::from_layers(vec![Dense {
            weight: Matrix::eye(dim, dim),
            bias: vec![0.0; dim],
        }])
        .expect("identity layer is consistent")
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("encoder.layers", "need at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::shape(format!("layer {i} bias length mismatch")));
            }
            if !l.is_finite() {
                return Err(Error::Data(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// `[input, hidden.., output]`
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Dense::output_dim));
        w
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Flattened parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            for t in l.tensors_mut() {
                t.copy_from_slice(&flat[off..off + t.len()]);
                off += t.len();
            }
        }
        self.generation += 1;
        Ok(())
    }

    /// Applies one optimizer step and invalidates outstanding caches.
    pub fn apply(&mut self, opt: &mut Momentum, lr: f64, grads: &EncoderGrads) {
        let mut params: Vec<&mut [f64]> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect();
        let g: Vec<&[f64]> = grads.layers.iter().flat_map(|l| l.tensors()).collect();
        opt.step(lr, &mut params, &g);
        self.generation += 1;
    }

    /// Embeds every row (no cache kept).
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        Ok(encoder_forward(self, x)?.0)
    }
}

impl EncoderGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Runs the batch through the network; output rows are unit-norm.
pub fn encoder_forward(m: &EncoderMLP, x: &Matrix) -> Result<(Matrix, EncoderCache)> {
    if x.cols() != m.input_dim() {
        return Err(Error::shape(format!(
            "encoder expects width {}, batch has {}",
            m.input_dim(),
            x.cols()
        )));
    }
    let last = m.layers.len() - 1;
    let mut activations = Vec::with_capacity(m.layers.len());
    let mut current = x.clone();
    for (i, layer) in m.layers.iter().enumerate() {
        let mut next = Matrix::zeros(current.rows(), layer.output_dim());
        for r in 0..current.rows() {
            let out = next.row_mut(r);
            layer.forward_into(current.row(r), out);
            if i != last {
                relu_inplace(out);
            }
        }
        activations.push(current);
        current = next;
    }
    let mut norms = Vec::with_capacity(current.rows());
    for r in 0..current.rows() {
        let row = current.row_mut(r);
        let n = norm(row).max(MIN_NORM);
        row.iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    let cache = EncoderCache {
        generation: m.generation,
        activations,
        output: current.clone(),
        norms,
    };
    Ok((current, cache))
}

/// Exact parameter gradients of `sum_r upstream[r] . output[r]`, including
/// the normalization Jacobian.
pub fn encoder_backward(
    m: &EncoderMLP,
    cache: &EncoderCache,
    upstream: &Matrix,
) -> Result<EncoderGrads> {
    if cache.generation != m.generation || cache.activations.len() != m.layers.len() {
        return Err(Error::Contract(
            "cache was produced before the latest parameter update".into(),
        ));
    }
    if upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols() {
        return Err(Error::shape("upstream gradient does not match encoder output"));
    }
    let mut grads: Vec<Dense> = m
        .layers
        .iter()
        .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
        .collect();
    for r in 0..upstream.rows() {
        let mut g = vec![0.0; m.output_dim()];
        l2_normalize_backward(cache.output.row(r), cache.norms[r], upstream.row(r), &mut g);
        for i in (0..m.layers.len()).rev() {
            let input = cache.activations[i].row(r);
            let need_input = i > 0;
            let mut gi = vec![0.0; if need_input { input.len() } else { 0 }];
            m.layers[i].backward_acc(
                input,
                &g,
                &mut grads[i],
                if need_input { Some(&mut gi) } else { None },
            );
            if need_input {
                // input of layer i is the rectified output of layer i-1
                relu_backward_inplace(input, &mut gi);
                g = gi;
            }
        }
    }
    Ok(EncoderGrads { layers: grads })
}
