//! Scalar kernels shared by the graph operations and the standalone API.

use crate::error::{Error, Result};

use super::Tensor;

/// Row-major matrix view used by [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical_shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a·b + beta·out` where `out` is row-major `m × n`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f64], beta: f64) {
    let (m, k) = a.logical_shape();
    let (k2, n) = b.logical_shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(out.len(), m * n);
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: slice lengths were checked against the logical shapes above and
    // the strides address only elements inside each slice.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Numerically stable softmax of a vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Layer normalization over one feature vector using population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    if gain.len() != x.len() || bias.len() != x.len() {
        return Err(Error::shape(format!(
            "layer_norm: x has {} features, gain {}, bias {}",
            x.len(),
            gain.len(),
            bias.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("layer_norm of an empty vector"));
    }
    if eps < 0.0 {
        return Err(Error::invalid("layer_norm eps must be non-negative"));
    }
    let (mean, inv_std) = norm_moments(x, eps);
    Ok(x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&v, (&g, &b))| g * (v - mean) * inv_std + b)
        .collect())
}

/// Mean and `1/sqrt(popvar + eps)` of a row.
pub(crate) fn norm_moments(x: &[f64], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

pub(crate) fn huber_elem(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a < delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub(crate) fn huber_grad_elem(r: f64, delta: f64) -> f64 {
    if r.abs() < delta {
        r
    } else {
        delta * r.signum()
    }
}

/// Mean Huber loss of `pred - target`.
pub fn huber_loss(pred: &Tensor, target: &Tensor, delta: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "huber_loss: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if delta <= 0.0 {
        return Err(Error::invalid("huber delta must be positive"));
    }
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| huber_elem(p - t, delta))
        .sum();
    Ok(total / pred.len() as f64)
}
