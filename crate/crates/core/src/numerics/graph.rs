//! Tape-based reverse-mode differentiation over whole tensors.
//!
//! Every operation appends one node holding its forward value. `backward`
//! walks the tape in reverse and returns the gradient of a scalar node with
//! respect to every node that depends on a parameter leaf.

use crate::error::{Error, Result};

use super::kernels::{self, gemm, MatRef};
use super::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Linear { x: Var, w: Var },
    AddBias { x: Var, b: Var },
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    SwapAxes { x: Var, a: usize, b: usize },
    Reshape(Var),
    RepeatAxis { x: Var, axis: usize, count: usize },
    Gather { table: Var, indices: Vec<usize> },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Huber { pred: Var, target: Var, delta: f64 },
    Mse { pred: Var, target: Var },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &str) -> Result<Var> {
        value.ensure_finite(name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    /// `x[..., k] · w[k, m]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.len() != 2 || *xs.last().unwrap() != ws[0] {
            return Err(Error::shape(format!("linear: input {xs:?} with weight {ws:?}")));
        }
        let (k, m) = (ws[0], ws[1]);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = m;
        let xv = self.value(x);
        let rows = xv.rows();
        let mut out = vec![0.0; rows * m];
        gemm(
            MatRef::new(xv.data(), rows, k),
            MatRef::new(self.value(w).data(), k, m),
            &mut out,
            0.0,
        );
        let t = Tensor::new(shape, out)?;
        self.push(t, Op::Linear { x, w }, &[x, w], "linear")
    }

    /// Adds a bias vector along the trailing axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let width = self.value(x).last_dim();
        let bs = self.shape(b);
        if bs != [width] {
            return Err(Error::shape(format!("add_bias: width {width} with bias {bs:?}")));
        }
        let bias = self.value(b).data().to_vec();
        let mut t = self.value(x).clone();
        for row in t.data_mut().chunks_exact_mut(width) {
            for (v, bv) in row.iter_mut().zip(&bias) {
                *v += bv;
            }
        }
        self.push(t, Op::AddBias { x, b }, &[x, b], "add_bias")
    }

    /// Linear map followed by a bias.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.linear(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut t = self.value(a).clone();
        for (v, w) in t.data_mut().iter_mut().zip(self.value(b).data()) {
            *v += w;
        }
        self.push(t, Op::Add(a, b), &[a, b], "add")
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let t = self.value(x).map(|v| v * k);
        self.push(t, Op::Scale(x, k), &[x], "scale")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v.max(0.0));
        self.push(t, Op::Relu(x), &[x], "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(t, Op::Sigmoid(x), &[x], "sigmoid")
    }

    /// Softmax along the trailing axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let mut t = self.value(x).clone();
        let width = t.last_dim();
        for row in t.data_mut().chunks_exact_mut(width) {
            kernels::softmax_in_place(row);
        }
        self.push(t, Op::Softmax(x), &[x], "softmax")
    }

    /// Layer normalization along the trailing axis.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let width = self.value(x).last_dim();
        if self.shape(gain) != [width] || self.shape(bias) != [width] {
            return Err(Error::shape(format!(
                "layer_norm: width {width}, gain {:?}, bias {:?}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let xv = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = xv.rows();
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks_exact(width) {
            let (mean, r) = kernels::norm_moments(row, eps);
            inv_std.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
            "layer_norm",
        )
    }

    /// Concatenation along the trailing axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let lead = &self.shape(*first)[..self.shape(*first).len() - 1];
        let mut width = 0;
        for p in parts {
            let s = self.shape(*p);
            if &s[..s.len() - 1] != lead {
                return Err(Error::shape(format!(
                    "concat: leading axes {:?} vs {:?}",
                    lead,
                    &s[..s.len() - 1]
                )));
            }
            width += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut shape = lead.to_vec();
        shape.push(width);
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                let v = self.value(*p);
                let w = v.last_dim();
                out.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(shape, out)?;
        self.push(t, Op::Concat(parts.to_vec()), parts, "concat")
    }

    /// Columns `[start, start + len)` of the trailing axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x).slice_last(start, len)?;
        self.push(t, Op::Slice { x, start }, &[x], "slice")
    }

    pub fn swap_axes(&mut self, x: Var, a: usize, b: usize) -> Result<Var> {
        let t = self.value(x).swap_axes(a, b)?;
        self.push(t, Op::SwapAxes { x, a, b }, &[x], "swap_axes")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape(x), &[x], "reshape")
    }

    /// Inserts a new axis of length `count` at `axis`, repeating the input.
    pub fn repeat_axis(&mut self, x: Var, axis: usize, count: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis > xs.len() || count == 0 {
            return Err(Error::shape(format!(
                "repeat_axis({axis}, {count}) on {xs:?}"
            )));
        }
        let outer: usize = xs[..axis].iter().product();
        let inner: usize = xs[axis..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * count * inner);
        for o in 0..outer {
            let block = &src[o * inner..(o + 1) * inner];
            for _ in 0..count {
                out.extend_from_slice(block);
            }
        }
        let mut shape = xs;
        shape.insert(axis, count);
        let t = Tensor::new(shape, out)?;
        self.push(t, Op::RepeatAxis { x, axis, count }, &[x], "repeat_axis")
    }

    /// Row lookup: `table[indices[i], :]` stacked into `[len, d]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let ts = self.shape(table);
        if ts.len() != 2 {
            return Err(Error::shape(format!("gather: table shape {ts:?}")));
        }
        let (rows, d) = (ts[0], ts[1]);
        if indices.is_empty() {
            return Err(Error::invalid("gather with no indices"));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= rows {
                return Err(Error::invalid(format!(
                    "lookup index {i} out of range for {rows} rows"
                )));
            }
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let t = Tensor::new(vec![indices.len(), d], out)?;
        self.push(
            t,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            &[table],
            "gather",
        )
    }

    /// Batched product over all leading axes: `a[.., n, k] · b[.., k, m]`, or
    /// `a · bᵀ` with `b[.., m, k]` when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if as_.len() < 2 || as_.len() != bs.len() || as_[..as_.len() - 2] != bs[..bs.len() - 2] {
            return Err(Error::shape(format!("batch_matmul: {as_:?} with {bs:?}")));
        }
        let r = as_.len();
        let (n, k) = (as_[r - 2], as_[r - 1]);
        let (bk, m) = if trans_b {
            (bs[r - 1], bs[r - 2])
        } else {
            (bs[r - 2], bs[r - 1])
        };
        if bk != k {
            return Err(Error::shape(format!("batch_matmul: {as_:?} with {bs:?}")));
        }
        let groups: usize = as_[..r - 2].iter().product();
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; groups * n * m];
        for gi in 0..groups {
            let am = MatRef::new(&av[gi * n * k..(gi + 1) * n * k], n, k);
            let bm = if trans_b {
                MatRef::new(&bv[gi * m * k..(gi + 1) * m * k], m, k).t()
            } else {
                MatRef::new(&bv[gi * k * m..(gi + 1) * k * m], k, m)
            };
            gemm(am, bm, &mut out[gi * n * m..(gi + 1) * n * m], 0.0);
        }
        let mut shape = as_[..r - 2].to_vec();
        shape.extend([n, m]);
        let t = Tensor::new(shape, out)?;
        self.push(t, Op::BatchMatMul { a, b, trans_b }, &[a, b], "batch_matmul")
    }

    /// Mean Huber loss against `target`; yields a one-element node.
    pub fn huber(&mut self, pred: Var, target: Var, delta: f64) -> Result<Var> {
        let loss = kernels::huber_loss(self.value(pred), self.value(target), delta)?;
        self.push(
            Tensor::scalar(loss),
            Op::Huber {
                pred,
                target,
                delta,
            },
            &[pred, target],
            "huber",
        )
    }

    /// Mean squared error against `target`; yields a one-element node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::shape(format!(
                "mse: {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let s: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let loss = s / p.len() as f64;
        self.push(Tensor::scalar(loss), Op::Mse { pred, target }, &[pred, target], "mse")
    }

    /// Reverse sweep from the one-element node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w } => {
                let ws = self.shape(*w);
                let (k, m) = (ws[0], ws[1]);
                let xv = self.value(*x);
                let rows = xv.rows();
                let dym = MatRef::new(dy.data(), rows, m);
                if self.wants(*x) {
                    let g = slot(grads, *x, xv.shape());
                    gemm(dym, MatRef::new(self.value(*w).data(), k, m).t(), g, 1.0);
                }
                if self.wants(*w) {
                    let g = slot(grads, *w, ws);
                    gemm(MatRef::new(xv.data(), rows, k).t(), dym, g, 1.0);
                }
            }
            Op::AddBias { x, b } => {
                if self.wants(*x) {
                    add_into(slot(grads, *x, dy.shape()), dy.data());
                }
                if self.wants(*b) {
                    let width = dy.last_dim();
                    let g = slot(grads, *b, &[width]);
                    for row in dy.data().chunks_exact(width) {
                        add_into(g, row);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        add_into(slot(grads, *v, dy.shape()), dy.data());
                    }
                }
            }
            Op::Scale(x, k) => {
                if self.wants(*x) {
                    let g = slot(grads, *x, dy.shape());
                    for (gv, d) in g.iter_mut().zip(dy.data()) {
                        *gv += k * d;
                    }
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    let g = slot(grads, *x, dy.shape());
                    for ((gv, d), xi) in g.iter_mut().zip(dy.data()).zip(xv) {
                        if *xi > 0.0 {
                            *gv += d;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(*x) {
                    let g = slot(grads, *x, dy.shape());
                    for ((gv, d), s) in g.iter_mut().zip(dy.data()).zip(y.data()) {
                        *gv += d * s * (1.0 - s);
                    }
                }
            }
            Op::Softmax(x) => {
                if self.wants(*x) {
                    let width = y.last_dim();
                    let g = slot(grads, *x, dy.shape());
                    for ((gr, dr), yr) in g
                        .chunks_exact_mut(width)
                        .zip(dy.data().chunks_exact(width))
                        .zip(y.data().chunks_exact(width))
                    {
                        let dot: f64 = dr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((gv, d), s) in gr.iter_mut().zip(dr).zip(yr) {
                            *gv += s * (d - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let width = y.last_dim();
                if self.wants(*gain) {
                    let g = slot(grads, *gain, &[width]);
                    for (dr, hr) in dy.data().chunks_exact(width).zip(xhat.chunks_exact(width)) {
                        for ((gv, d), h) in g.iter_mut().zip(dr).zip(hr) {
                            *gv += d * h;
                        }
                    }
                }
                if self.wants(*bias) {
                    let g = slot(grads, *bias, &[width]);
                    for dr in dy.data().chunks_exact(width) {
                        add_into(g, dr);
                    }
                }
                if self.wants(*x) {
                    let gain_v = self.value(*gain).data();
                    let n = width as f64;
                    let g = slot(grads, *x, dy.shape());
                    let mut dh = vec![0.0; width];
                    for (((gr, dr), hr), r) in g
                        .chunks_exact_mut(width)
                        .zip(dy.data().chunks_exact(width))
                        .zip(xhat.chunks_exact(width))
                        .zip(inv_std)
                    {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..width {
                            dh[j] = dr[j] * gain_v[j];
                            sum_dh += dh[j];
                            sum_dh_h += dh[j] * hr[j];
                        }
                        let (mean_dh, mean_dh_h) = (sum_dh / n, sum_dh_h / n);
                        for j in 0..width {
                            gr[j] += r * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let width = dy.last_dim();
                let mut offset = 0;
                for p in parts {
                    let pw = self.value(*p).last_dim();
                    if self.wants(*p) {
                        let g = slot(grads, *p, self.shape(*p));
                        for (gr, dr) in g.chunks_exact_mut(pw).zip(dy.data().chunks_exact(width)) {
                            add_into(gr, &dr[offset..offset + pw]);
                        }
                    }
                    offset += pw;
                }
            }
            Op::Slice { x, start } => {
                if self.wants(*x) {
                    let xs = self.shape(*x);
                    let width = *xs.last().unwrap();
                    let len = dy.last_dim();
                    let g = slot(grads, *x, xs);
                    for (gr, dr) in g.chunks_exact_mut(width).zip(dy.data().chunks_exact(len)) {
                        add_into(&mut gr[*start..*start + len], dr);
                    }
                }
            }
            Op::SwapAxes { x, a, b } => {
                if self.wants(*x) {
                    let back = dy.swap_axes(*a, *b).expect("axes validated in forward");
                    add_into(slot(grads, *x, back.shape()), back.data());
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    add_into(slot(grads, *x, self.shape(*x)), dy.data());
                }
            }
            Op::RepeatAxis { x, axis, count } => {
                if self.wants(*x) {
                    let xs = self.shape(*x);
                    let outer: usize = xs[..*axis].iter().product();
                    let inner: usize = xs[*axis..].iter().product();
                    let g = slot(grads, *x, xs);
                    for o in 0..outer {
                        for c in 0..*count {
                            let base = (o * count + c) * inner;
                            add_into(&mut g[o * inner..(o + 1) * inner], &dy.data()[base..base + inner]);
                        }
                    }
                }
            }
            Op::Gather { table, indices } => {
                if self.wants(*table) {
                    let ts = self.shape(*table);
                    let d = ts[1];
                    let g = slot(grads, *table, ts);
                    for (row, &i) in dy.data().chunks_exact(d).zip(indices) {
                        add_into(&mut g[i * d..(i + 1) * d], row);
                    }
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let as_ = self.shape(*a);
                let bs = self.shape(*b);
                let r = as_.len();
                let (n, k) = (as_[r - 2], as_[r - 1]);
                let m = dy.last_dim();
                let groups = dy.len() / (n * m);
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let g = slot(grads, *a, as_);
                    for gi in 0..groups {
                        let dym = MatRef::new(&dy.data()[gi * n * m..(gi + 1) * n * m], n, m);
                        let bblk = &bv[gi * k * m..(gi + 1) * k * m];
                        // dA = dC·Bᵀ, or dC·B when B was used transposed
                        let bm = if *trans_b {
                            MatRef::new(bblk, m, k)
                        } else {
                            MatRef::new(bblk, k, m).t()
                        };
                        gemm(dym, bm, &mut g[gi * n * k..(gi + 1) * n * k], 1.0);
                    }
                }
                if self.wants(*b) {
                    let g = slot(grads, *b, bs);
                    for gi in 0..groups {
                        let dym = MatRef::new(&dy.data()[gi * n * m..(gi + 1) * n * m], n, m);
                        let am = MatRef::new(&av[gi * n * k..(gi + 1) * n * k], n, k);
                        let out = &mut g[gi * k * m..(gi + 1) * k * m];
                        if *trans_b {
                            // dB = dCᵀ·A
                            gemm(dym.t(), am, out, 1.0);
                        } else {
                            // dB = Aᵀ·dC
                            gemm(am.t(), dym, out, 1.0);
                        }
                    }
                }
            }
            Op::Huber {
                pred,
                target,
                delta,
            } => {
                let scale = dy.data()[0] / self.value(*pred).len() as f64;
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let resid: Vec<f64> = p
                    .iter()
                    .zip(t)
                    .map(|(a, b)| scale * kernels::huber_grad_elem(a - b, *delta))
                    .collect();
                if self.wants(*pred) {
                    add_into(slot(grads, *pred, self.shape(*pred)), &resid);
                }
                if self.wants(*target) {
                    let g = slot(grads, *target, self.shape(*target));
                    for (gv, r) in g.iter_mut().zip(&resid) {
                        *gv -= r;
                    }
                }
            }
            Op::Mse { pred, target } => {
                let scale = 2.0 * dy.data()[0] / self.value(*pred).len() as f64;
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let resid: Vec<f64> = p.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
                if self.wants(*pred) {
                    add_into(slot(grads, *pred, self.shape(*pred)), &resid);
                }
                if self.wants(*target) {
                    let g = slot(grads, *target, self.shape(*target));
                    for (gv, r) in g.iter_mut().zip(&resid) {
                        *gv -= r;
                    }
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
