// Copyright 2026 The Impression Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and whatever it
//! needs for the backward pass. Node indices are topologically ordered by
//! construction, so [`Tape::backward`] is a single reverse sweep.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Relu(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ChannelMean {
        x: Var,
        over_batch: bool,
    },
    ChannelVar {
        x: Var,
        over_batch: bool,
        mean: Vec<f64>,
    },
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    ChannelAffine {
        x: Var,
        scale: Vec<T>,
    },
    SubConst(Var),
    SubRow(Var),
    SquareSumRows(Var),
    Add(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    visited: usize,
    done: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// How a channel statistic reduces an `N x C x H x W` input.
fn stat_layout(shape: &[usize], over_batch: bool) -> Result<([usize; 4], Vec<usize>)> {
    let dims = match *shape {
        [n, c, h, w] => [n, c, h, w],
        _ => return Err(Error::dim("channel_stats", &[0, 0, 0, 0], shape)),
    };
    let [n, c, h, w] = dims;
    if h * w == 0 {
        return Err(Error::Degenerate(format!(
            "channel statistics need a non-empty spatial extent, got {shape:?}"
        )));
    }
    if over_batch && n == 0 {
        return Err(Error::Degenerate("channel statistics over an empty batch".into()));
    }
    let out = if over_batch { vec![c] } else { vec![n, c] };
    Ok((dims, out))
}

/// Maps (sample, channel) to the output slot of a channel statistic.
#[inline]
fn stat_slot(over_batch: bool, c: usize, n: usize, ch: usize) -> usize {
    if over_batch {
        ch
    } else {
        n * c + ch
    }
}

/// Rows and columns of a value viewed as a matrix: rank-1 is one row,
/// higher ranks fold everything after the first axis into columns.
fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [c] => (1, *c),
        [r, rest @ ..] => (*r, rest.iter().product()),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            visited: 0,
            done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// participated and requires a gradient.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Number of operations the last backward pass processed.
    pub fn visited(&self) -> usize {
        self.visited
    }

    /// Clears gradients so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.visited = 0;
        self.done = false;
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced a NaN or infinite value")));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.value(x).shape(), self.value(w).shape(), stride, pad)?;
        if let Some(b) = b {
            if self.value(b).shape() != [geom.k] {
                return Err(Error::dim("conv2d bias", &[geom.k], self.value(b).shape()));
            }
        }
        let out = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(geom.out_shape().to_vec(), out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(value, &inputs, Op::Conv2d { x, w, b, geom }, "conv2d")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
        )?;
        self.push(value, &[x], Op::Relu(x), "relu")
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("maxpool2")?;
        let (out, argmax) = kernels::maxpool2_forward([n, c, h, w], self.value(x).data());
        let value = Tensor::new([n, c, h / 2, w / 2], out)?;
        self.push(value, &[x], Op::MaxPool2 { x, argmax }, "maxpool2")
    }

    pub fn global_avgpool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("global_avgpool")?;
        if h * w == 0 {
            return Err(Error::Degenerate("global average pool over an empty plane".into()));
        }
        let plane = h * w;
        let inv = 1.0 / plane as f64;
        let data = self.value(x).data();
        let out = (0..n * c)
            .map(|p| {
                let s: f64 = data[p * plane..(p + 1) * plane].iter().map(|v| v.f64()).sum();
                T::of(s * inv)
            })
            .collect();
        let value = Tensor::new([n, c], out)?;
        self.push(value, &[x], Op::GlobalAvgPool(x), "global_avgpool")
    }

    /// `x [N, F] . w[G, F]^T + b[G]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        let (n, f, g) = match (xs, ws) {
            ([n, f], [g, wf]) if f == wf => (*n, *f, *g),
            _ => {
                return Err(Error::Dimension {
                    op: "dense (input vs weight)",
                    expected: xs.to_vec(),
                    got: ws.to_vec(),
                })
            }
        };
        let mut out = vec![T::zero(); n * g];
        let mut beta = T::zero();
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [g] {
                return Err(Error::dim("dense bias", &[g], bv.shape()));
            }
            for row in out.chunks_mut(g.max(1)) {
                row.copy_from_slice(bv.data());
            }
            beta = T::one();
        }
        T::gemm(n, f, g, self.value(x).data(), false, self.value(w).data(), true, &mut out, beta);
        let value = Tensor::new([n, g], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(value, &inputs, Op::Dense { x, w, b }, "dense")
    }

    /// Per-channel mean. With `over_batch` the result is `[C]` reduced over
    /// all `N*H*W` elements; otherwise `[N, C]` reduced over `H*W`.
    pub fn channel_mean(&mut self, x: Var, over_batch: bool) -> Result<Var> {
        let mean = self.channel_mean_values(x, over_batch)?;
        let (_, out_shape) = stat_layout(self.value(x).shape(), over_batch)?;
        let value = Tensor::new(out_shape, mean.iter().map(|&m| T::of(m)).collect())?;
        self.push(value, &[x], Op::ChannelMean { x, over_batch }, "channel_mean")
    }

    /// Per-channel population variance, same layout as [`Tape::channel_mean`].
    pub fn channel_var(&mut self, x: Var, over_batch: bool) -> Result<Var> {
        let mean = self.channel_mean_values(x, over_batch)?;
        let ([n, c, h, w], out_shape) = stat_layout(self.value(x).shape(), over_batch)?;
        let plane = h * w;
        let count = if over_batch { n * plane } else { plane } as f64;
        let data = self.value(x).data();
        let mut acc = vec![0.0f64; mean.len()];
        for s in 0..n {
            for ch in 0..c {
                let slot = stat_slot(over_batch, c, s, ch);
                let m = mean[slot];
                let start = (s * c + ch) * plane;
                for &v in &data[start..start + plane] {
                    let d = v.f64() - m;
                    acc[slot] += d * d;
                }
            }
        }
        let value = Tensor::new(out_shape, acc.iter().map(|&a| T::of(a / count)).collect())?;
        self.push(value, &[x], Op::ChannelVar { x, over_batch, mean }, "channel_var")
    }

    fn channel_mean_values(&self, x: Var, over_batch: bool) -> Result<Vec<f64>> {
        let ([n, c, h, w], out_shape) = stat_layout(self.value(x).shape(), over_batch)?;
        let plane = h * w;
        let count = if over_batch { n * plane } else { plane } as f64;
        let data = self.value(x).data();
        let mut acc = vec![0.0f64; out_shape.iter().product()];
        for s in 0..n {
            for ch in 0..c {
                let start = (s * c + ch) * plane;
                acc[stat_slot(over_batch, c, s, ch)] +=
                    data[start..start + plane].iter().map(|v| v.f64()).sum::<f64>();
            }
        }
        acc.iter_mut().for_each(|a| *a /= count);
        Ok(acc)
    }

    /// `out[i] = x[index[i]]`, reshaped to `shape`. Used for crops, flips
    /// and edge-replicating shifts; the backward pass scatter-adds.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let src = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= src.numel()) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for {} elements",
                src.numel()
            )));
        }
        let value = Tensor::new(shape, index.iter().map(|&i| src.data()[i]).collect())?;
        self.push(value, &[x], Op::Gather { x, index }, "gather")
    }

    /// `y[n, c, ..] = x[n, c, ..] * scale[c] + shift[c]`.
    pub fn channel_affine(&mut self, x: Var, scale: &[T], shift: &[T]) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape().to_vec();
        if shape.len() < 2 || shape[1] != scale.len() || scale.len() != shift.len() {
            return Err(Error::dim("channel_affine", &[0, scale.len()], &shape));
        }
        let c = shape[1];
        let inner: usize = shape[2..].iter().product();
        let mut out = t.data().to_vec();
        for (i, chunk) in out.chunks_mut(inner.max(1)).enumerate() {
            let ch = i % c;
            for v in chunk {
                *v = *v * scale[ch] + shift[ch];
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(
            value,
            &[x],
            Op::ChannelAffine {
                x,
                scale: scale.to_vec(),
            },
            "channel_affine",
        )
    }

    /// `x - c` for a constant of identical shape.
    pub fn sub_const(&mut self, x: Var, c: &Tensor<T>) -> Result<Var> {
        let t = self.value(x);
        if t.shape() != c.shape() {
            return Err(Error::dim("sub_const", t.shape(), c.shape()));
        }
        let out = t.data().iter().zip(c.data()).map(|(&a, &b)| a - b).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push(value, &[x], Op::SubConst(x), "sub_const")
    }

    /// Subtracts a constant row from every row of `x`.
    pub fn sub_row(&mut self, x: Var, row: &[T]) -> Result<Var> {
        let t = self.value(x);
        let (_, cols) = rows_cols(t.shape());
        if cols != row.len() {
            return Err(Error::dim("sub_row", &[cols], &[row.len()]));
        }
        let mut out = t.data().to_vec();
        for chunk in out.chunks_mut(cols.max(1)) {
            for (v, &r) in chunk.iter_mut().zip(row) {
                *v -= r;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push(value, &[x], Op::SubRow(x), "sub_row")
    }

    /// Sum of squares along every row, giving `[rows]`.
    pub fn square_sum_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = rows_cols(t.shape());
        let out = (0..rows)
            .map(|r| {
                t.data()[r * cols..(r + 1) * cols]
                    .iter()
                    .fold(T::zero(), |acc, &v| acc + v * v)
            })
            .collect();
        let value = Tensor::new([rows], out)?;
        self.push(value, &[x], Op::SquareSumRows(x), "square_sum_rows")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("add", ta.shape(), tb.shape()));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        self.push(value, &[a, b], Op::Add(a, b), "add")
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| v * s).collect())?;
        self.push(value, &[x], Op::Scale(x, s), "scale")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().fold(T::zero(), |acc, &v| acc + v);
        self.push(Tensor::scalar(s), &[x], Op::Sum(x), "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(Error::Degenerate("mean of an empty tensor".into()));
        }
        let s = t.data().iter().fold(T::zero(), |acc, &v| acc + v) / T::of(t.numel() as f64);
        self.push(Tensor::scalar(s), &[x], Op::Mean(x), "mean")
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push(value, &[x], Op::Reshape(x), "reshape")
    }

    /// Mean softmax cross-entropy of `logits [N, G]` against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (n, g) = match *t.shape() {
            [n, g] if n == labels.len() && n > 0 => (n, g),
            _ => return Err(Error::dim("cross_entropy", &[labels.len(), 0], t.shape())),
        };
        if let Some(&bad) = labels.iter().find(|&&l| l >= g) {
            return Err(Error::Contract(format!("label {bad} out of range for {g} classes")));
        }
        let mut probs = Vec::with_capacity(n * g);
        let mut loss = 0.0f64;
        for (row, &label) in t.data().chunks(g).zip(labels) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
            let exps: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += z.ln() - (row[label].f64() - max);
            probs.extend(exps.iter().map(|e| T::of(e / z)));
        }
        let value = Tensor::scalar(T::of(loss / n as f64));
        self.push(
            value,
            &[logits],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            "cross_entropy",
        )
    }

    /// Propagates gradients from the scalar `loss` to every node that
    /// requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.done {
            return Err(Error::State(
                "backward already ran on this tape; call zero_grad first".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.visited = 0;
        self.done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if !matches!(self.nodes[i].op, Op::Leaf) {
                self.visited += 1;
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&mut self, v: Var, contrib: Vec<T>) {
        match &mut self.grads[v.0] {
            Some(g) => g.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Runs `f` on the (zero-initialized if absent) gradient buffer of `v`,
    /// with read access to the recorded values.
    fn accumulate_with(&mut self, v: Var, f: impl FnOnce(&[Node<T>], &mut [T])) {
        let n = self.nodes[v.0].value.numel();
        let mut g = self.grads[v.0].take().unwrap_or_else(|| vec![T::zero(); n]);
        f(&self.nodes, &mut g);
        self.grads[v.0] = Some(g);
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        // Ops only read their own saved state plus input values, then add
        // into input gradients.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let want = (self.wants(*x), self.wants(*w), b.is_some_and(|b| self.wants(b)));
                let grads = kernels::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    want,
                );
                if let Some(dx) = grads.input {
                    self.accumulate(*x, dx);
                }
                if let Some(dw) = grads.weight {
                    self.accumulate(*w, dw);
                }
                if let (Some(b), Some(db)) = (b, grads.bias) {
                    self.accumulate(*b, db);
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let out = self.nodes[i].value.data();
                    let dx = g
                        .iter()
                        .zip(out)
                        .map(|(&gv, &o)| if o > T::zero() { gv } else { T::zero() })
                        .collect();
                    self.accumulate(*x, dx);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if self.wants(*x) {
                    self.accumulate_with(*x, |_, dx| {
                        for (&src, &gv) in argmax.iter().zip(g) {
                            dx[src] += gv;
                        }
                    });
                }
            }
            Op::GlobalAvgPool(x) => {
                if self.wants(*x) {
                    let [_, _, h, w] = self.value(*x).dims4("global_avgpool").expect("rank 4");
                    let plane = h * w;
                    let inv = T::of(1.0 / plane as f64);
                    self.accumulate_with(*x, |_, dx| {
                        for (p, &gv) in g.iter().enumerate() {
                            for d in &mut dx[p * plane..(p + 1) * plane] {
                                *d += gv * inv;
                            }
                        }
                    });
                }
            }
            Op::Dense { x, w, b } => {
                let (n, f) = rows_cols(self.value(*x).shape());
                let gdim = self.value(*w).shape()[0];
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); n * f];
                    T::gemm(n, gdim, f, g, false, self.value(*w).data(), false, &mut dx, T::zero());
                    self.accumulate(*x, dx);
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); gdim * f];
                    T::gemm(gdim, n, f, g, true, self.value(*x).data(), false, &mut dw, T::zero());
                    self.accumulate(*w, dw);
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    let mut db = vec![T::zero(); gdim];
                    for row in g.chunks(gdim.max(1)) {
                        db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    self.accumulate(b, db);
                }
            }
            Op::ChannelMean { x, over_batch } => {
                if self.wants(*x) {
                    let [n, c, h, w] = self.value(*x).dims4("channel_mean").expect("rank 4");
                    let plane = h * w;
                    let count = if *over_batch { n * plane } else { plane };
                    let inv = T::of(1.0 / count as f64);
                    let ob = *over_batch;
                    self.accumulate_with(*x, |_, dx| {
                        for s in 0..n {
                            for ch in 0..c {
                                let gv = g[stat_slot(ob, c, s, ch)] * inv;
                                let start = (s * c + ch) * plane;
                                dx[start..start + plane].iter_mut().for_each(|d| *d += gv);
                            }
                        }
                    });
                }
            }
            Op::ChannelVar { x, over_batch, mean } => {
                if self.wants(*x) {
                    let [n, c, h, w] = self.value(*x).dims4("channel_var").expect("rank 4");
                    let plane = h * w;
                    let count = if *over_batch { n * plane } else { plane };
                    let two_over = 2.0 / count as f64;
                    let ob = *over_batch;
                    let xi = x.0;
                    self.accumulate_with(*x, |nodes, dx| {
                        let data = nodes[xi].value.data();
                        for s in 0..n {
                            for ch in 0..c {
                                let slot = stat_slot(ob, c, s, ch);
                                let gv = g[slot].f64() * two_over;
                                let m = mean[slot];
                                let start = (s * c + ch) * plane;
                                for (d, &v) in dx[start..start + plane].iter_mut().zip(&data[start..start + plane]) {
                                    *d += T::of(gv * (v.f64() - m));
                                }
                            }
                        }
                    });
                }
            }
            Op::Gather { x, index } => {
                if self.wants(*x) {
                    self.accumulate_with(*x, |_, dx| {
                        for (&src, &gv) in index.iter().zip(g) {
                            dx[src] += gv;
                        }
                    });
                }
            }
            Op::ChannelAffine { x, scale } => {
                if self.wants(*x) {
                    let shape = self.value(*x).shape().to_vec();
                    let c = shape[1];
                    let inner: usize = shape[2..].iter().product();
                    let mut dx = g.to_vec();
                    for (j, chunk) in dx.chunks_mut(inner.max(1)).enumerate() {
                        let s = scale[j % c];
                        chunk.iter_mut().for_each(|v| *v *= s);
                    }
                    self.accumulate(*x, dx);
                }
            }
            Op::SubConst(x) | Op::SubRow(x) | Op::Reshape(x) => {
                if self.wants(*x) {
                    self.accumulate(*x, g.to_vec());
                }
            }
            Op::SquareSumRows(x) => {
                if self.wants(*x) {
                    let (_, cols) = rows_cols(self.value(*x).shape());
                    let two = T::of(2.0);
                    let dx = self
                        .value(*x)
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| two * v * g[j / cols.max(1)])
                        .collect();
                    self.accumulate(*x, dx);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        self.accumulate(v, g.to_vec());
                    }
                }
            }
            Op::Scale(x, s) => {
                if self.wants(*x) {
                    let s = *s;
                    self.accumulate(*x, g.iter().map(|&v| v * s).collect());
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let n = self.value(*x).numel();
                    self.accumulate(*x, vec![g[0]; n]);
                }
            }
            Op::Mean(x) => {
                if self.wants(*x) {
                    let n = self.value(*x).numel();
                    self.accumulate(*x, vec![g[0] / T::of(n as f64); n]);
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                if self.wants(*logits) {
                    let n = labels.len();
                    let classes = probs.len() / n;
                    let scale = g[0] / T::of(n as f64);
                    let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    for (r, &l) in labels.iter().enumerate() {
                        dx[r * classes + l] -= scale;
                    }
                    self.accumulate(*logits, dx);
                }
            }
        }
        self.nodes[i].op = op;
    }
}
