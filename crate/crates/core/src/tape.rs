//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Tape`]; creation order is a valid
//! topological order, so [`Tape::backward`] walks the nodes once in reverse.
//! Broadcasting is limited to the leading batch dimensions of [`Tape::matmul`]
//! and the bias row of [`Tape::add_bias`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::tensor::{numel, strides, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate backward-rule corruption, used to prove that the gradient
/// checker notices a broken rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the right-hand-side gradient of every matmul by 1.01.
    MatmulRhsGrad,
    /// Drops the `-sum(g*y)` term of the softmax backward rule.
    SoftmaxGrad,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
        // (a offset, b offset) per output matrix
        pairs: Vec<(usize, usize)>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddBias { x: Var, bias: Var },
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    // out[j] = input[index[j]]
    Gather { input: Var, index: Vec<usize> },
    Softmax(Var),
    MeanAxis {
        input: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Sum(Var),
    Concat { parts: Vec<(Var, usize)>, rows: usize },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Records tensor operations for reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
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

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a trainable tensor.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a tensor that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, available after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    /// Batched matrix product `[.., m, k] x [.., k, n] -> [.., m, n]`.
    ///
    /// Leading batch dimensions broadcast when equal, absent, or 1.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let ba = &sa[..sa.len() - 2];
        let bb = &sb[..sb.len() - 2];
        let nd = ba.len().max(bb.len());
        let pad = |s: &[usize]| -> Vec<usize> {
            let mut p = vec![1; nd - s.len()];
            p.extend_from_slice(s);
            p
        };
        let (pa, pb) = (pad(ba), pad(bb));
        let mut batch = Vec::with_capacity(nd);
        for i in 0..nd {
            let d = match (pa[i], pb[i]) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => return Err(shape_err("matmul", &sa, &sb)),
            };
            batch.push(d);
        }
        let (sta, stb) = (strides(&pa), strides(&pb));
        let nbatch = numel(&batch);
        let mut pairs = Vec::with_capacity(nbatch);
        let mut coord = vec![0usize; nd];
        for _ in 0..nbatch {
            let mut oa = 0;
            let mut ob = 0;
            for i in 0..nd {
                if pa[i] != 1 {
                    oa += coord[i] * sta[i];
                }
                if pb[i] != 1 {
                    ob += coord[i] * stb[i];
                }
            }
            pairs.push((oa * m * k, ob * k * n));
            for i in (0..nd).rev() {
                coord[i] += 1;
                if coord[i] < batch[i] {
                    break;
                }
                coord[i] = 0;
            }
        }

        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; nbatch * m * n];
        for (p, &(oa, ob)) in pairs.iter().enumerate() {
            let c = &mut out[p * m * n..(p + 1) * m * n];
            for i in 0..m {
                let arow = &ad[oa + i * k..oa + (i + 1) * k];
                let crow = &mut c[i * n..(i + 1) * n];
                for (kk, &av) in arow.iter().enumerate() {
                    let brow = &bd[ob + kk * n..ob + (kk + 1) * n];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                }
            }
        }
        let mut shape = batch;
        shape.extend_from_slice(&[m, n]);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(shape, out).expect("matmul shape"),
            Op::MatMul {
                a,
                b,
                m,
                k,
                n,
                pairs,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds a `[n]` bias to every row of a `[.., n]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = *tx.shape().last().unwrap_or(&1);
        if tb.shape() != [n] || tx.ndim() == 0 {
            return Err(shape_err("add_bias", tx.shape(), tb.shape()));
        }
        let bd = tb.data();
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(bd).map(|(a, b)| a + b))
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias { x, bias }, rg))
    }

    /// Affine map `x W + b` with `W: [c_in, c_out]`, `b: [c_out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, weight)?;
        self.add_bias(xw, bias)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| libm::tanh(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Tanh(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        let value = t.clone().reshape(shape.to_vec())?;
        let index = (0..t.numel()).collect();
        let rg = self.rg(x);
        Ok(self.push(value, Op::Gather { input: x, index }, rg))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        let shape = t.shape();
        let nd = shape.len();
        let mut seen = vec![false; nd];
        if axes.len() != nd {
            return Err(shape_err("permute", shape, axes));
        }
        for &a in axes {
            if a >= nd || seen[a] {
                return Err(shape_err("permute", shape, axes));
            }
            seen[a] = true;
        }
        let in_strides = strides(shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let total = t.numel();
        let mut index = Vec::with_capacity(total);
        let mut coord = vec![0usize; nd];
        for _ in 0..total {
            index.push((0..nd).map(|i| coord[i] * in_strides[axes[i]]).sum());
            for i in (0..nd).rev() {
                coord[i] += 1;
                if coord[i] < out_shape[i] {
                    break;
                }
                coord[i] = 0;
            }
        }
        let src = t.data();
        let data = index.iter().map(|&j| src[j]).collect();
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Gather { input: x, index }, rg))
    }

    /// Softmax over the last axis with max subtraction.
    ///
    /// Entries equal to `-inf` map to exactly zero; a row with no finite
    /// entry is an error.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let n = *t.shape().last().ok_or_else(|| shape_err("softmax", t.shape(), &[]))?;
        let mut data = vec![0.0; t.numel()];
        for (row, out) in t.data().chunks(n).zip(data.chunks_mut(n)) {
            softmax_row(row, out)?;
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax(x), rg))
    }

    /// Mean over one axis; the axis is removed from the shape.
    pub fn mean_over_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        let shape = t.shape();
        if axis >= shape.len() {
            return Err(TensorError::Axis {
                axis,
                shape: shape.to_vec(),
            });
        }
        let outer = numel(&shape[..axis]);
        let len = shape[axis];
        let inner = numel(&shape[axis + 1..]);
        let src = t.data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    data[o * inner + i] += src[base + i];
                }
            }
        }
        let inv = 1.0 / len as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::MeanAxis { input: x, outer, len, inner }, rg))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Concatenates tensors with equal leading dimensions along the last axis.
    pub fn concat_lastdim(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or_else(|| shape_err("concat", &[], &[]))?;
        let lead = {
            let s = self.shape(*first);
            if s.is_empty() {
                return Err(shape_err("concat", s, &[]));
            }
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(shape_err("concat", self.shape(*first), s));
            }
            widths.push((p, s[s.len() - 1]));
        }
        let rows = numel(&lead);
        let total: usize = widths.iter().map(|w| w.1).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, w) in &widths {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat { parts: widths, rows }, rg))
    }

    /// Mean cross-entropy `-log softmax(logits)[label]` over rows.
    ///
    /// `logits` is `[E]` with one label or `[B, E]` with `B` labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(logits);
        let (rows, classes) = match t.shape() {
            [e] => (1, *e),
            [b, e] => (*b, *e),
            s => return Err(shape_err("cross_entropy", s, &[labels.len()])),
        };
        if labels.len() != rows {
            return Err(shape_err("cross_entropy", t.shape(), &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(TensorError::Label { label, classes });
        }
        let mut probs = vec![0.0; rows * classes];
        let mut loss = 0.0;
        for ((row, out), &label) in t.data().chunks(classes).zip(probs.chunks_mut(classes)).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
            for (o, &v) in out.iter_mut().zip(row) {
                *o = libm::exp(v - lse);
            }
            loss += lse - row[label];
        }
        loss /= rows as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Accumulates d`loss`/d`leaf` into every trainable leaf.
    ///
    /// Leaves that do not influence `loss` receive zeros, so every leaf has
    /// a gradient afterwards. Repeated calls add up until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if !self.value(loss).is_scalar() {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                grads[id] = Some(g);
                continue;
            }
            self.backward_node(id, &g, &mut grads);
        }
        for (id, node) in self.nodes.iter_mut().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                continue;
            }
            let acc = node.grad.get_or_insert_with(|| vec![0.0; node.value.numel()]);
            if let Some(Some(g)) = grads.get(id) {
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        Ok(())
    }

    fn backward_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let fault = self.fault;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul { a, b, m, k, n, pairs } => {
                let (m, k, n) = (*m, *k, *n);
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                if self.rg(*a) {
                    let ga = slot(grads, *a, ad.len());
                    for (p, &(oa, ob)) in pairs.iter().enumerate() {
                        let gc = &g[p * m * n..(p + 1) * m * n];
                        // dA = dC B^T
                        for i in 0..m {
                            let grow = &gc[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let brow = &bd[ob + kk * n..ob + (kk + 1) * n];
                                ga[oa + i * k + kk] += dot(grow, brow);
                            }
                        }
                    }
                }
                if self.rg(*b) {
                    let scale = if fault == Some(Fault::MatmulRhsGrad) { 1.01 } else { 1.0 };
                    let gb = slot(grads, *b, bd.len());
                    for (p, &(oa, ob)) in pairs.iter().enumerate() {
                        let gc = &g[p * m * n..(p + 1) * m * n];
                        // dB = A^T dC
                        for i in 0..m {
                            let grow = &gc[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let av = ad[oa + i * k + kk] * scale;
                                let dst = &mut gb[ob + kk * n..ob + (kk + 1) * n];
                                for (d, &gv) in dst.iter_mut().zip(grow) {
                                    *d += av * gv;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    let ga = slot(grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bd[i];
                    }
                }
                if self.rg(*b) {
                    let gb = slot(grads, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * ad[i];
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if self.rg(*x) {
                    add_into(slot(grads, *x, g.len()), g);
                }
                if self.rg(*bias) {
                    let n = self.value(*bias).numel();
                    let gb = slot(grads, *bias, n);
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Scale(x, f) => {
                let gx = slot(grads, *x, g.len());
                for (d, &v) in gx.iter_mut().zip(g) {
                    *d += v * f;
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    if xd[i] > 0.0 {
                        gx[i] += g[i];
                    }
                }
            }
            Op::Tanh(x) => {
                let yd = node.value.data();
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * (1.0 - yd[i] * yd[i]);
                }
            }
            Op::Gather { input, index } => {
                let len = self.value(*input).numel();
                let gx = slot(grads, *input, len);
                for (j, &src) in index.iter().enumerate() {
                    gx[src] += g[j];
                }
            }
            Op::Softmax(x) => {
                let yd = node.value.data();
                let n = *node.value.shape().last().unwrap_or(&1);
                let gx = slot(grads, *x, g.len());
                for ((yr, gr), dst) in yd.chunks(n).zip(g.chunks(n)).zip(gx.chunks_mut(n)) {
                    let s = if fault == Some(Fault::SoftmaxGrad) { 0.0 } else { dot(yr, gr) };
                    for i in 0..n {
                        dst[i] += yr[i] * (gr[i] - s);
                    }
                }
            }
            Op::MeanAxis { input, outer, len, inner } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                let inv = 1.0 / len as f64;
                let gx = slot(grads, *input, outer * len * inner);
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            gx[base + i] += g[o * inner + i] * inv;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                let len = self.value(*x).numel();
                let gx = slot(grads, *x, len);
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Concat { parts, rows } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for &(p, w) in parts {
                    if self.rg(p) {
                        let gp = slot(grads, p, rows * w);
                        for r in 0..*rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            add_into(&mut gp[r * w..(r + 1) * w], src);
                        }
                    }
                    offset += w;
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let classes = probs.len() / labels.len();
                let f = g[0] / labels.len() as f64;
                let gx = slot(grads, *logits, probs.len());
                for (r, &label) in labels.iter().enumerate() {
                    for c in 0..classes {
                        let onehot = if c == label { 1.0 } else { 0.0 };
                        gx[r * classes + c] += f * (probs[r * classes + c] - onehot);
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_row(row: &[f64], out: &mut [f64]) -> Result<(), TensorError> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(TensorError::FullyMaskedRow);
    }
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = if v == f64::NEG_INFINITY { 0.0 } else { libm::exp(v - max) };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(())
}
