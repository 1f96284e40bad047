use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Sigmoid arguments are clamped to this magnitude before exponentiation.
pub const SIGMOID_CLAMP: f64 = 40.0;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Transpose { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { x: Var, scale: f64 },
    Relu { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Softmax { x: Var, axis: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    GatherRows { x: Var, rows: Vec<usize> },
    RepeatRows { x: Var },
    Reshape { x: Var },
    Sum { x: Var },
    LayerNorm { x: Var, inv_std: Vec<f64> },
    CrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of executed operations, replayed in reverse by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every variable that required them.
#[derive(Debug)]
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

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn sigmoid(x: f64) -> f64 {
    let c = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + libm::exp(-c))
}

fn softmax_slices(data: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let mut max = f64::NEG_INFINITY;
            for j in 0..len {
                max = max.max(data[at(j)]);
            }
            let mut total = 0.0;
            for j in 0..len {
                let e = libm::exp(data[at(j)] - max);
                out[at(j)] = e;
                total += e;
            }
            for j in 0..len {
                out[at(j)] /= total;
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::dim("transpose", s, &[]));
        }
        let (r, c) = (s[0], s[1]);
        let out = kernels::transpose(self.value(x).data(), r, c);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose { x }, rg))
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub { a, b }, rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul { a, b }, rg))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        Tensor::new(t.shape().to_vec(), data).expect("shape preserved")
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.map(x, |v| scale * v + shift);
        let rg = self.rg(x);
        self.push(t, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        let t = self.map(x, |v| scale * v);
        let rg = self.rg(x);
        self.push(t, Op::Affine { x, scale }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        self.push(t, Op::Relu { x }, rg)
    }

    /// Sign pattern of every ReLU input recorded so far. Two evaluations with
    /// equal patterns lie on the same linear piece of each rectifier.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu { x } = node.op {
                out.extend(self.nodes[x.0].value.data().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map(x, sigmoid);
        let rg = self.rg(x);
        self.push(t, Op::Sigmoid { x }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.map(x, libm::tanh);
        let rg = self.rg(x);
        self.push(t, Op::Tanh { x }, rg)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.shape().len() {
            return Err(Error::Argument(alloc::format!(
                "softmax axis {axis} out of range for {:?}",
                t.shape()
            )));
        }
        let out = softmax_slices(t.data(), t.shape(), axis);
        let t = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax { x, axis }, rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Argument("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Argument(alloc::format!("concat axis {axis} out of range")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Contiguous sub-range `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::Argument(alloc::format!(
                "narrow [{start}, {}) on axis {axis} of {s:?}",
                start + len
            )));
        }
        let (outer, full, inner) = split_axis(&s, axis);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            out.extend_from_slice(&data[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Narrow { x, axis, start }, rg))
    }

    /// Selects rows of a matrix (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || rows.is_empty() {
            return Err(Error::dim("gather_rows", t.shape(), &[rows.len()]));
        }
        let (n, c) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(Error::Argument(alloc::format!("row {r} out of range for {n} rows")));
            }
            out.extend_from_slice(t.row_slice(r));
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![rows.len(), c], out)?,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Tiles a `[1, n]` row into `[times, n]`.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || t.shape()[0] != 1 || times == 0 {
            return Err(Error::dim("repeat_rows", t.shape(), &[times]));
        }
        let mut out = Vec::with_capacity(times * t.len());
        for _ in 0..times {
            out.extend_from_slice(t.data());
        }
        let n = t.cols();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![times, n], out)?, Op::RepeatRows { x }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = compensated_sum(self.value(x).data());
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Normalises each slice along the last axis to zero mean and unit variance.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let rows = t.len() / c;
        let mut out = vec![0.0; t.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &t.data()[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            for (o, v) in out[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let t = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(x);
        self.push(t, Op::LayerNorm { x, inv_std }, rg)
    }

    /// `-log softmax(logits)[target]` for a single logit vector.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != 1 {
            return Err(Error::dim("cross_entropy", t.shape(), &[1]));
        }
        let n = t.len();
        if target >= n {
            return Err(Error::Argument(alloc::format!(
                "target index {target} out of range for {n} classes"
            )));
        }
        let probs = softmax_slices(t.data(), &[n], 0);
        let max = t.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + libm::log(t.data().iter().map(|&v| libm::exp(v - max)).sum::<f64>());
        let loss = lse - t.data()[target];
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::dim("backward", out.shape(), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("grad shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.rg(*a) {
                    let bv = self.value(*b).data();
                    self.accumulate(grads, *a, |da| kernels::gemm_nt_acc(g, bv, da, m, n, k));
                }
                let av = self.value(*a).data();
                self.accumulate(grads, *b, |db| kernels::gemm_tn_acc(av, g, db, m, k, n));
            }
            Op::Transpose { x } => {
                let s = node.value.shape();
                let gt = kernels::transpose(g, s[0], s[1]);
                self.accumulate(grads, *x, |dx| add_into(dx, &gt));
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, |d| add_into(d, g));
                self.accumulate(grads, *b, |d| add_into(d, g));
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, |d| add_into(d, g));
                self.accumulate(grads, *b, |d| {
                    for (o, v) in d.iter_mut().zip(g) {
                        *o -= v;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |d| {
                    for ((o, gv), w) in d.iter_mut().zip(g).zip(bv) {
                        *o += gv * w;
                    }
                });
                self.accumulate(grads, *b, |d| {
                    for ((o, gv), w) in d.iter_mut().zip(g).zip(av) {
                        *o += gv * w;
                    }
                });
            }
            Op::Affine { x, scale } => self.accumulate(grads, *x, |d| {
                for (o, gv) in d.iter_mut().zip(g) {
                    *o += scale * gv;
                }
            }),
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |d| {
                    for ((o, gv), v) in d.iter_mut().zip(g).zip(xv) {
                        if *v > 0.0 {
                            *o += gv;
                        }
                    }
                })
            }
            Op::Sigmoid { x } => self.accumulate(grads, *x, |d| {
                for ((o, gv), s) in d.iter_mut().zip(g).zip(y) {
                    *o += gv * s * (1.0 - s);
                }
            }),
            Op::Tanh { x } => self.accumulate(grads, *x, |d| {
                for ((o, gv), t) in d.iter_mut().zip(g).zip(y) {
                    *o += gv * (1.0 - t * t);
                }
            }),
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                self.accumulate(grads, *x, |d| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..len {
                                d[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                })
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                let row = node.value.shape()[*axis] * inner;
                for &v in inputs {
                    let block = self.shape(v)[*axis] * inner;
                    self.accumulate(grads, v, |d| {
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + block];
                            add_into(&mut d[o * block..(o + 1) * block], src);
                        }
                    });
                    offset += block;
                }
            }
            Op::Narrow { x, axis, start } => {
                let s = self.shape(*x);
                let (outer, full, inner) = split_axis(s, *axis);
                let len = node.value.shape()[*axis];
                self.accumulate(grads, *x, |d| {
                    for o in 0..outer {
                        let base = o * full * inner + start * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        add_into(&mut d[base..base + len * inner], src);
                    }
                })
            }
            Op::GatherRows { x, rows } => {
                let c = node.value.cols();
                self.accumulate(grads, *x, |d| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut d[r * c..(r + 1) * c], &g[i * c..(i + 1) * c]);
                    }
                })
            }
            Op::RepeatRows { x } => {
                let c = node.value.cols();
                self.accumulate(grads, *x, |d| {
                    for chunk in g.chunks(c) {
                        add_into(d, chunk);
                    }
                })
            }
            Op::Reshape { x } => self.accumulate(grads, *x, |d| add_into(d, g)),
            Op::Sum { x } => self.accumulate(grads, *x, |d| {
                for o in d.iter_mut() {
                    *o += g[0];
                }
            }),
            Op::LayerNorm { x, inv_std } => {
                let c = node.value.cols();
                self.accumulate(grads, *x, |d| {
                    for (r, inv) in inv_std.iter().enumerate() {
                        let gr = &g[r * c..(r + 1) * c];
                        let yr = &y[r * c..(r + 1) * c];
                        let mean_g = gr.iter().sum::<f64>() / c as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for ((o, gv), yv) in d[r * c..(r + 1) * c].iter_mut().zip(gr).zip(yr) {
                            *o += inv * (gv - mean_g - yv * mean_gy);
                        }
                    }
                })
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => self.accumulate(grads, *logits, |d| {
                for (j, (o, p)) in d.iter_mut().zip(probs).enumerate() {
                    let t = if j == *target { 1.0 } else { 0.0 };
                    *o += g[0] * (p - t);
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

/// Neumaier summation; reductions feed finite-difference checks, where the
/// rounding of a naive running sum dominates the difference quotient.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if libm::fabs(sum) >= libm::fabs(v) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
