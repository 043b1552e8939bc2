//! InfoNCE loss over a batch of view pairs and its alignment/uniformity split.
//!
//! Rows `2k` and `2k + 1` of the batch are the two views of pair `k`. The
//! loss is the mean over all `2N` anchors of
//! `-sim(anchor, positive)/tau + log sum_{k != anchor} exp(sim(anchor, k)/tau)`.
//! The first part averaged over anchors is the alignment term, the second the
//! uniformity term.

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm, Matrix};

/// Allowed deviation of a row norm from one.
pub const LOSS_UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "f64", into = "f64"))]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            Err(Error::config("tau", "temperature must be positive"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossTerms {
    pub loss: f64,
    pub alignment: f64,
    pub uniformity: f64,
}

fn check_batch(z: &Matrix) -> Result<usize> {
    if z.rows() < 2 || z.rows() % 2 != 0 {
        return Err(Error::shape(format!(
            "batch must hold 2N >= 2 rows, got {}",
            z.rows()
        )));
    }
    for (i, r) in z.iter_rows().enumerate() {
        if (norm(r) - 1.0).abs() > LOSS_UNIT_TOL {
            return Err(Error::Precondition(format!("row {i} is not unit-norm")));
        }
    }
    Ok(z.rows() / 2)
}

#[inline]
fn positive_of(i: usize) -> usize {
    i ^ 1
}

/// Per-anchor pieces: `(s_pos / tau, logsumexp_{k != i} s_ik / tau)`.
fn anchor_terms(z: &Matrix, tau: f64, i: usize, logits: &mut [f64]) -> (f64, f64) {
    let zi = z.row(i);
    let mut max = f64::NEG_INFINITY;
    for (k, l) in logits.iter_mut().enumerate() {
        if k == i {
            continue;
        }
        *l = dot(zi, z.row(k)) / tau;
        max = max.max(*l);
    }
    let mut acc = 0.0;
    for (k, l) in logits.iter().enumerate() {
        if k != i {
            acc += libm::exp(l - max);
        }
    }
    (logits[positive_of(i)], max + libm::log(acc))
}

pub fn info_nce_loss(z: &Matrix, tau: Temperature) -> Result<f64> {
    Ok(loss_terms(z, tau)?.loss)
}

/// `(alignment, uniformity)`; their sum equals [`info_nce_loss`].
pub fn loss_decomposition(z: &Matrix, tau: Temperature) -> Result<(f64, f64)> {
    let t = loss_terms(z, tau)?;
    Ok((t.alignment, t.uniformity))
}

pub fn loss_terms(z: &Matrix, tau: Temperature) -> Result<LossTerms> {
    let n = check_batch(z)?;
    let tau = tau.get();
    let two_n = (2 * n) as f64;
    let mut logits = vec![0.0; 2 * n];
    let (mut loss, mut pos, mut lse) = (0.0, 0.0, 0.0);
    for i in 0..2 * n {
        let (p, l) = anchor_terms(z, tau, i, &mut logits);
        loss += l - p;
        pos += p;
        lse += l;
    }
    Ok(LossTerms {
        loss: loss / two_n,
        alignment: -pos / two_n,
        uniformity: lse / two_n,
    })
}

/// Loss terms plus `dL/dz` for every row (treating `sim` as the dot product
/// of the already normalized rows).
pub fn loss_and_grad(z: &Matrix, tau: Temperature) -> Result<(LossTerms, Matrix)> {
    let terms = loss_terms(z, tau)?;
    let rows = z.rows();
    let tau = tau.get();
    let scale = 1.0 / (rows as f64 * tau);
    let mut grad = Matrix::zeros(rows, z.cols());
    let mut logits = vec![0.0; rows];
    for i in 0..rows {
        let (_, lse) = anchor_terms(z, tau, i, &mut logits);
        for k in 0..rows {
            if k == i {
                continue;
            }
            let mut coeff = libm::exp(logits[k] - lse);
            if k == positive_of(i) {
                coeff -= 1.0;
            }
            coeff *= scale;
            if coeff == 0.0 {
                continue;
            }
            // d s_ik / d z_i = z_k and d s_ik / d z_k = z_i
            axpy(coeff, z.row(k), grad.row_mut(i));
            axpy(coeff, z.row(i), grad.row_mut(k));
        }
    }
    Ok((terms, grad))
}
