use alloc::vec;
use alloc::vec::Vec;

use super::{Tensor, TensorError};
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv2dGeom {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    MatVec { w: Var, x: Var, m: usize, k: usize },
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Reshape(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Softmax { src: Var, cols: usize },
    Conv2d { input: Var, kernel: Var, bias: Var, geom: Conv2dGeom },
    /// Flat input index of the winner for each output element.
    MaxPool { src: Var, argmax: Vec<usize> },
    Mse { pred: Var, target: Var },
    CrossEntropy { logits: Var, probs: Vec<f64>, target: Vec<f64>, rows: usize },
    L2Normalize { src: Var, norm: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward/backward pass. Tapes are
/// single-threaded; build one per pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> TensorError {
    TensorError::Shape { op, shapes: shapes.iter().map(|s| s.to_vec()).collect() }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor, record: Op, inputs: &[Var]) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op });
        }
        let requires_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node { value, op: record, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, &[self.shape(a), self.shape(b)]));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        Tensor { shape: self.shape(a).to_vec(), data }
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        Tensor { shape: self.shape(a).to_vec(), data }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        self.push("sub", v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        self.push("mul", v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let v = self.map(a, |x| x * factor);
        self.push("scale", v, Op::Scale(a, factor), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var, TensorError> {
        let v = self.map(a, |x| x + offset);
        self.push("add_scalar", v, Op::AddScalar(a), &[a])
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => return Err(shape_err("matmul", &[sa, sb])),
        };
        let (da, db) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                for j in 0..n {
                    out[i * n + j] += av * db[p * n + j];
                }
            }
        }
        let v = Tensor { shape: vec![m, n], data: out };
        self.push("matmul", v, Op::MatMul { a, b, m, k, n }, &[a, b])
    }

    /// `[m, k] x [k] -> [m]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, TensorError> {
        let (sw, sx) = (self.shape(w), self.shape(x));
        let (m, k) = match (sw, sx) {
            ([m, k], [k2]) if k == k2 => (*m, *k),
            _ => return Err(shape_err("matvec", &[sw, sx])),
        };
        let (dw, dx) = (self.data(w), self.data(x));
        let out = (0..m)
            .map(|i| dw[i * k..(i + 1) * k].iter().zip(dx).map(|(a, b)| a * b).sum())
            .collect();
        let v = Tensor { shape: vec![m], data: out };
        self.push("matvec", v, Op::MatVec { w, x, m, k }, &[w, x])
    }

    /// Concatenation along axis 0; trailing dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Invalid { op: "concat", reason: "no inputs" })?;
        let tail = self.shape(first).get(1..).unwrap_or(&[]).to_vec();
        if self.shape(first).is_empty() {
            return Err(shape_err("concat", &[self.shape(first)]));
        }
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                let shapes: Vec<&[usize]> = parts.iter().map(|&q| self.shape(q)).collect();
                return Err(shape_err("concat", &shapes));
            }
            lead += s[0];
            data.extend_from_slice(self.data(p));
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let v = Tensor { shape, data };
        self.push("concat", v, Op::Concat(parts.to_vec()), parts)
    }

    /// Contiguous slice `[start, start + len)` of a 1-D tensor.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(src);
        if s.len() != 1 || start + len > s[0] || len == 0 {
            return Err(shape_err("slice", &[s, &[start, len]]));
        }
        let v = Tensor::vector(self.data(src)[start..start + len].to_vec());
        self.push("slice", v, Op::Slice { src, start }, &[src])
    }

    pub fn reshape(&mut self, src: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let v = self.value(src).reshaped(shape).map_err(|_| shape_err("reshape", &[self.shape(src), shape]))?;
        self.push("reshape", v, Op::Reshape(src), &[src])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.map(a, sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.map(a, math::tanh);
        self.push("tanh", v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = self.map(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push("relu", v, Op::Relu(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = Tensor::scalar(self.data(a).iter().sum());
        self.push("sum", v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let d = self.data(a);
        let v = Tensor::scalar(d.iter().sum::<f64>() / d.len() as f64);
        self.push("mean", v, Op::Mean(a), &[a])
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let cols = *self.shape(a).last().ok_or_else(|| shape_err("softmax", &[self.shape(a)]))?;
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let v = Tensor { shape: self.shape(a).to_vec(), data };
        self.push("softmax", v, Op::Softmax { src: a, cols }, &[a])
    }

    /// 2-D convolution of a `[c, h, w]` input with a `[o, c, k, k]` kernel
    /// and `[o]` bias, zero padding on every side.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let (si, sk, sb) = (self.shape(input), self.shape(kernel), self.shape(bias));
        let geom = match (si, sk, sb) {
            ([c, h, w], [o, c2, k, k2], [o2]) if c == c2 && k == k2 && o == o2 && stride > 0 => {
                if h + 2 * padding < *k || w + 2 * padding < *k {
                    return Err(shape_err("conv2d", &[si, sk, sb]));
                }
                let oh = (h + 2 * padding - k) / stride + 1;
                let ow = (w + 2 * padding - k) / stride + 1;
                Conv2dGeom { c: *c, h: *h, w: *w, o: *o, k: *k, stride, padding, oh, ow }
            }
            _ => return Err(shape_err("conv2d", &[si, sk, sb])),
        };
        let (x, kw, b) = (self.data(input), self.data(kernel), self.data(bias));
        let g = geom;
        let mut out = vec![0.0; g.o * g.oh * g.ow];
        for o in 0..g.o {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = b[o];
                    for c in 0..g.c {
                        for ky in 0..g.k {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            if iy < 0 || iy as usize >= g.h {
                                continue;
                            }
                            for kx in 0..g.k {
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if ix < 0 || ix as usize >= g.w {
                                    continue;
                                }
                                acc += kw[((o * g.c + c) * g.k + ky) * g.k + kx]
                                    * x[(c * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                    out[(o * g.oh + oy) * g.ow + ox] = acc;
                }
            }
        }
        let v = Tensor { shape: vec![g.o, g.oh, g.ow], data: out };
        self.push("conv2d", v, Op::Conv2d { input, kernel, bias, geom }, &[input, kernel, bias])
    }

    /// Non-overlapping `size x size` max pooling of a `[c, h, w]` tensor;
    /// trailing rows and columns that do not fill a window are dropped.
    /// Ties go to the first element in row-major order.
    pub fn max_pool2d(&mut self, src: Var, size: usize) -> Result<Var, TensorError> {
        let s = self.shape(src);
        let (c, h, w) = match s {
            [c, h, w] if size > 0 && *h >= size && *w >= size => (*c, *h, *w),
            _ => return Err(shape_err("max_pool2d", &[s, &[size]])),
        };
        let (oh, ow) = (h / size, w / size);
        let x = self.data(src);
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (usize::MAX, f64::NEG_INFINITY);
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx = (ch * h + oy * size + dy) * w + ox * size + dx;
                            if x[idx] > best.1 {
                                best = (idx, x[idx]);
                            }
                        }
                    }
                    out.push(best.1);
                    argmax.push(best.0);
                }
            }
        }
        let v = Tensor { shape: vec![c, oh, ow], data: out };
        self.push("max_pool2d", v, Op::MaxPool { src, argmax }, &[src])
    }

    /// Per-channel maximum over all spatial positions: `[c, h, w] -> [c]`.
    pub fn global_max_pool(&mut self, src: Var) -> Result<Var, TensorError> {
        let s = self.shape(src);
        let (c, hw) = match s {
            [c, h, w] => (*c, h * w),
            _ => return Err(shape_err("global_max_pool", &[s])),
        };
        let x = self.data(src);
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for ch in 0..c {
            let mut best = (ch * hw, x[ch * hw]);
            for i in 1..hw {
                let idx = ch * hw + i;
                if x[idx] > best.1 {
                    best = (idx, x[idx]);
                }
            }
            out.push(best.1);
            argmax.push(best.0);
        }
        let v = Tensor::vector(out);
        self.push("global_max_pool", v, Op::MaxPool { src, argmax }, &[src])
    }

    /// Mean of squared differences.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        self.same_shape("mse_loss", pred, target)?;
        let d = self.data(pred);
        let t = self.data(target);
        let total: f64 = d.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let v = Tensor::scalar(total / d.len() as f64);
        self.push("mse_loss", v, Op::Mse { pred, target }, &[pred, target])
    }

    /// Mean over rows of `-log softmax(logits) . one_hot`, fused with
    /// log-sum-exp. Logits are `[classes]` or `[rows, classes]`; every
    /// target row must be an exact one-hot vector.
    pub fn cross_entropy(&mut self, logits: Var, one_hot: &Tensor) -> Result<Var, TensorError> {
        let s = self.shape(logits);
        if s != one_hot.shape() || s.is_empty() || s.len() > 2 {
            return Err(shape_err("cross_entropy", &[s, one_hot.shape()]));
        }
        let cols = *s.last().unwrap_or(&1);
        let rows = self.value(logits).numel() / cols;
        for (r, row) in one_hot.data().chunks(cols).enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != cols {
                return Err(TensorError::InvalidOneHot { row: r });
            }
        }
        let mut probs = self.data(logits).to_vec();
        let mut total = 0.0;
        for (r, row) in self.data(logits).chunks(cols).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + math::ln(row.iter().map(|&z| math::exp(z - max)).sum::<f64>());
            let target = &one_hot.data()[r * cols..(r + 1) * cols];
            total += row.iter().zip(target).map(|(&z, &t)| t * (lse - z)).sum::<f64>();
            softmax_in_place(&mut probs[r * cols..(r + 1) * cols]);
        }
        let v = Tensor::scalar(total / rows as f64);
        let op = Op::CrossEntropy { logits, probs, target: one_hot.data().to_vec(), rows };
        self.push("cross_entropy", v, op, &[logits])
    }

    /// `x / max(||x||, 1e-12)` for a 1-D tensor.
    pub fn l2_normalize(&mut self, src: Var) -> Result<Var, TensorError> {
        if self.shape(src).len() != 1 {
            return Err(shape_err("l2_normalize", &[self.shape(src)]));
        }
        let norm = math::sqrt(self.data(src).iter().map(|x| x * x).sum::<f64>()).max(1e-12);
        let v = self.map(src, |x| x / norm);
        self.push("l2_normalize", v, Op::L2Normalize { src, norm }, &[src])
    }

    /// Sum of squared differences, as a scalar.
    pub fn squared_distance(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.sum(sq)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(&node.op, &node.value, &g, &mut grads)?;
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match (g, &node.op) {
                    (Some(data), Op::Leaf) => Some(Tensor { shape: node.value.shape().to_vec(), data }),
                    _ => None,
                }
            })
            .collect::<Vec<_>>();
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(TensorError::NonFinite { op: "backward" });
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn backprop_node(
        &self,
        op: &Op,
        out: &Tensor,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<(), TensorError> {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |s| add_into(s, g));
                self.accumulate(grads, *b, |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |s| add_into(s, g));
                self.accumulate(grads, *b, |s| s.iter_mut().zip(g).for_each(|(d, v)| *d -= v));
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                self.accumulate(grads, *a, |s| {
                    s.iter_mut().zip(g).zip(db).for_each(|((d, gv), bv)| *d += gv * bv)
                });
                self.accumulate(grads, *b, |s| {
                    s.iter_mut().zip(g).zip(da).for_each(|((d, gv), av)| *d += gv * av)
                });
            }
            Op::Scale(a, f) => {
                self.accumulate(grads, *a, |s| s.iter_mut().zip(g).for_each(|(d, v)| *d += v * f));
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                self.accumulate(grads, *a, |s| add_into(s, g));
            }
            &Op::MatMul { a, b, m, k, n } => {
                let (da, db) = (self.data(a), self.data(b));
                self.accumulate(grads, a, |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * db[p * n + j];
                            }
                            s[i * k + p] += acc;
                        }
                    }
                });
                self.accumulate(grads, b, |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let av = da[i * k + p];
                            for j in 0..n {
                                s[p * n + j] += av * g[i * n + j];
                            }
                        }
                    }
                });
            }
            &Op::MatVec { w, x, m, k } => {
                let (dw, dx) = (self.data(w), self.data(x));
                self.accumulate(grads, w, |s| {
                    for i in 0..m {
                        let gi = g[i];
                        for (d, xv) in s[i * k..(i + 1) * k].iter_mut().zip(dx) {
                            *d += gi * xv;
                        }
                    }
                });
                self.accumulate(grads, x, |s| {
                    for i in 0..m {
                        let gi = g[i];
                        for (d, wv) in s.iter_mut().zip(&dw[i * k..(i + 1) * k]) {
                            *d += gi * wv;
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.numel();
                    self.accumulate(grads, p, |s| add_into(s, &g[offset..offset + len]));
                    offset += len;
                }
            }
            &Op::Slice { src, start } => {
                self.accumulate(grads, src, |s| add_into(&mut s[start..start + g.len()], g));
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                self.accumulate(grads, *a, |s| {
                    s.iter_mut().zip(g).zip(y).for_each(|((d, gv), yv)| *d += gv * yv * (1.0 - yv))
                });
            }
            Op::Tanh(a) => {
                let y = out.data();
                self.accumulate(grads, *a, |s| {
                    s.iter_mut().zip(g).zip(y).for_each(|((d, gv), yv)| *d += gv * (1.0 - yv * yv))
                });
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                self.accumulate(grads, *a, |s| {
                    s.iter_mut().zip(g).zip(x).for_each(|((d, gv), xv)| {
                        if *xv > 0.0 {
                            *d += gv
                        }
                    })
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |s| s.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.numel() as f64;
                self.accumulate(grads, *a, |s| s.iter_mut().for_each(|d| *d += g[0] / n));
            }
            &Op::Softmax { src, cols } => {
                let y = out.data();
                self.accumulate(grads, src, |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((d, gv), yv) in srow.iter_mut().zip(grow).zip(yrow) {
                            *d += yv * (gv - dot);
                        }
                    }
                });
            }
            &Op::Conv2d { input, kernel, bias, geom } => {
                let gm = geom;
                let (x, kw) = (self.data(input), self.data(kernel));
                let taps = |o: usize, oy: usize, ox: usize, f: &mut dyn FnMut(usize, usize)| {
                    for c in 0..gm.c {
                        for ky in 0..gm.k {
                            let iy = (oy * gm.stride + ky) as isize - gm.padding as isize;
                            if iy < 0 || iy as usize >= gm.h {
                                continue;
                            }
                            for kx in 0..gm.k {
                                let ix = (ox * gm.stride + kx) as isize - gm.padding as isize;
                                if ix < 0 || ix as usize >= gm.w {
                                    continue;
                                }
                                f(((o * gm.c + c) * gm.k + ky) * gm.k + kx, (c * gm.h + iy as usize) * gm.w + ix as usize);
                            }
                        }
                    }
                };
                self.accumulate(grads, bias, |s| {
                    for o in 0..gm.o {
                        s[o] += g[o * gm.oh * gm.ow..(o + 1) * gm.oh * gm.ow].iter().sum::<f64>();
                    }
                });
                self.accumulate(grads, kernel, |s| {
                    for o in 0..gm.o {
                        for oy in 0..gm.oh {
                            for ox in 0..gm.ow {
                                let gv = g[(o * gm.oh + oy) * gm.ow + ox];
                                if gv != 0.0 {
                                    taps(o, oy, ox, &mut |ki, xi| s[ki] += gv * x[xi]);
                                }
                            }
                        }
                    }
                });
                self.accumulate(grads, input, |s| {
                    for o in 0..gm.o {
                        for oy in 0..gm.oh {
                            for ox in 0..gm.ow {
                                let gv = g[(o * gm.oh + oy) * gm.ow + ox];
                                if gv != 0.0 {
                                    taps(o, oy, ox, &mut |ki, xi| s[xi] += gv * kw[ki]);
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxPool { src, argmax } => {
                self.accumulate(grads, *src, |s| {
                    for (gv, &idx) in g.iter().zip(argmax) {
                        s[idx] += gv;
                    }
                });
            }
            &Op::Mse { pred, target } => {
                let (p, t) = (self.data(pred), self.data(target));
                let n = p.len() as f64;
                self.accumulate(grads, pred, |s| {
                    for ((d, a), b) in s.iter_mut().zip(p).zip(t) {
                        *d += g[0] * 2.0 * (a - b) / n;
                    }
                });
                self.accumulate(grads, target, |s| {
                    for ((d, a), b) in s.iter_mut().zip(p).zip(t) {
                        *d -= g[0] * 2.0 * (a - b) / n;
                    }
                });
            }
            Op::CrossEntropy { logits, probs, target, rows } => {
                let scale = g[0] / *rows as f64;
                self.accumulate(grads, *logits, |s| {
                    for ((d, p), t) in s.iter_mut().zip(probs).zip(target) {
                        *d += scale * (p - t);
                    }
                });
            }
            &Op::L2Normalize { src, norm } => {
                let y = out.data();
                let clamped = norm <= 1e-12;
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                self.accumulate(grads, src, |s| {
                    for ((d, gv), yv) in s.iter_mut().zip(g).zip(y) {
                        *d += if clamped { gv / norm } else { (gv - yv * dot) / norm };
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Leaf gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for a leaf; zeros when the leaf did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0) {
            Some(Some(t)) => t.clone(),
            _ => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::eye(3));
        let a = tape.constant(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = tape.matmul(i, a).unwrap();
        assert_eq!(tape.value(r), tape.value(a));
    }

    #[test]
    fn concat_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![3.0, 4.0, 5.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.shape(c), &[5]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        match tape.add(a, b) {
            Err(TensorError::Shape { op, shapes }) => {
                assert_eq!(op, "add");
                assert_eq!(shapes, vec![vec![2], vec![3]]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let w = tape.constant(Tensor::zeros(&[2, 4]));
        assert!(matches!(tape.matvec(w, b), Err(TensorError::Shape { op: "matvec", .. })));
    }

    #[test]
    fn conv_impulse_reproduces_kernel() {
        let mut tape = Tape::new();
        let mut img = Tensor::zeros(&[1, 7, 7]);
        img.data_mut()[3 * 7 + 3] = 1.0;
        let kernel_vals: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let x = tape.constant(img);
        let k = tape.constant(t(&[1, 1, 3, 3], &kernel_vals));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, k, b, 1, 1).unwrap();
        let out = tape.value(y);
        // Cross-correlation: the impulse response is the kernel flipped.
        for ky in 0..3 {
            for kx in 0..3 {
                let oy = 3 + 1 - ky;
                let ox = 3 + 1 - kx;
                assert_eq!(out.data()[oy * 7 + ox], kernel_vals[ky * 3 + kx]);
            }
        }
        assert_eq!(out.data().iter().filter(|v| **v != 0.0).count(), 9);
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn mse_self_is_zero_with_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let l = tape.mse_loss(x, x).unwrap();
        assert_eq!(tape.value(l).item(), Some(0.0));
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x), Tensor::zeros(&[3]));
    }

    #[test]
    fn uninfluenced_leaf_gets_zeros() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::vector(vec![5.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(unused), Tensor::zeros(&[1]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert_eq!(tape.backward(x).unwrap_err(), TensorError::NotScalar(vec![2]));
    }

    #[test]
    fn cross_entropy_uniform_is_ln3() {
        let mut tape = Tape::new();
        let z = tape.param(Tensor::vector(vec![0.7, 0.7, 0.7]));
        let l = tape.cross_entropy(z, &Tensor::vector(vec![0.0, 1.0, 0.0])).unwrap();
        assert!((tape.value(l).item().unwrap() - libm::log(3.0)).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let mut tape = Tape::new();
        let z = tape.param(t(&[2, 3], &[0.0; 6]));
        let bad = t(&[2, 3], &[1.0, 0.0, 0.0, 0.5, 0.5, 0.0]);
        assert_eq!(tape.cross_entropy(z, &bad).unwrap_err(), TensorError::InvalidOneHot { row: 1 });
    }

    #[test]
    fn non_finite_trips_guard() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1e308]));
        assert_eq!(tape.scale(x, 10.0).unwrap_err(), TensorError::NonFinite { op: "scale" });
    }

    #[test]
    fn global_max_pool_enumeration() {
        let mut tape = Tape::new();
        // c = 3 channels of 2x2.
        let x = tape.constant(t(&[3, 2, 2], &[1.0, 4.0, 2.0, 3.0, -1.0, -5.0, -0.5, -2.0, 7.0, 7.0, 0.0, 1.0]));
        let y = tape.global_max_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, -0.5, 7.0]);
    }

    #[test]
    fn max_pool_picks_window_max() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2, 4], &[1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0]));
        let y = tape.max_pool2d(x, 2).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 2]);
        assert_eq!(tape.value(y).data(), &[5.0, 8.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -100.0, 0.0, 100.0]));
        let y = tape.softmax(x).unwrap();
        for row in tape.value(y).data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
