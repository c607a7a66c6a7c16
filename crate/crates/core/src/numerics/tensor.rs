use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` array.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Build from a function of the flat index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Size of the trailing axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    /// Product of all axes except the last.
    pub fn rows(&self) -> usize {
        self.data.len() / self.last_dim()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    /// Errors with `context` if any element is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if all_finite(&self.data) {
            return Ok(());
        }
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!("{context} (flat index {i})"))),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy of columns `[start, start + len)` of the trailing axis.
    pub fn slice_last(&self, start: usize, len: usize) -> Result<Self> {
        let width = self.last_dim();
        if start + len > width || len == 0 {
            return Err(Error::shape(format!(
                "slice [{start}, {}) outside width {width}",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(self.rows() * len);
        for row in self.data.chunks_exact(width) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = len;
        Ok(Self { shape, data: out })
    }

    /// Swap two axes, materializing the permuted layout.
    pub fn swap_axes(&self, a: usize, b: usize) -> Result<Self> {
        let rank = self.rank();
        if a >= rank || b >= rank {
            return Err(Error::shape(format!(
                "swap_axes({a}, {b}) on rank-{rank} tensor"
            )));
        }
        if a == b {
            return Ok(self.clone());
        }
        let (a, b) = (a.min(b), a.max(b));
        let mut out_shape = self.shape.clone();
        out_shape.swap(a, b);
        // view as [outer, da, mid, db, inner] and copy inner runs
        let outer: usize = self.shape[..a].iter().product();
        let da = self.shape[a];
        let mid: usize = self.shape[a + 1..b].iter().product();
        let db = self.shape[b];
        let inner: usize = self.shape[b + 1..].iter().product();
        let mut out = Vec::with_capacity(self.data.len());
        for o in 0..outer {
            for j in 0..db {
                for m in 0..mid {
                    for i in 0..da {
                        let src = (((o * da + i) * mid + m) * db + j) * inner;
                        out.extend_from_slice(&self.data[src..src + inner]);
                    }
                }
            }
        }
        Ok(Self {
            shape: out_shape,
            data: out,
        })
    }
}

/// `v - v` is zero for finite values and NaN otherwise; lane-wise sums let
/// the loop vectorize.
fn all_finite(data: &[f64]) -> bool {
    let mut acc = [0.0f64; 8];
    let chunks = data.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for i in 0..8 {
            acc[i] += c[i] - c[i];
        }
    }
    for (i, &v) in tail.iter().enumerate() {
        acc[i] += v - v;
    }
    acc.iter().sum::<f64>() == 0.0
}
