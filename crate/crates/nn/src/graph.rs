//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order, so `backward` is a single reverse sweep. Parameters are read
//! straight from the borrowed [`ParamStore`] and their gradients are returned in a
//! [`Gradients`] buffer rather than written in place, so a frozen store can be shared
//! by several graphs at once.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::param::{Gradients, ParamId, ParamStore};
use crate::tensor::{axpy, dot, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddN(Vec<Var>),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Dot(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    Stack(Vec<Var>),
    Gather(Var, Vec<usize>),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Mask(Var, Vec<f64>),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Debug)]
enum Value {
    Owned(Tensor),
    Param(ParamId),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation over the parameters of one store.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Iteration helper for softmax lanes along one axis of a rank-1 or rank-2 tensor.
#[derive(Clone, Copy)]
struct Lanes {
    count: usize,
    len: usize,
    lane_stride: usize,
    elem_stride: usize,
}

impl Lanes {
    fn new(op: &'static str, shape: &[usize], axis: usize) -> Result<Self> {
        match (shape, axis) {
            ([n], 0) => Ok(Lanes { count: 1, len: *n, lane_stride: 0, elem_stride: 1 }),
            ([r, c], 1) => Ok(Lanes { count: *r, len: *c, lane_stride: *c, elem_stride: 1 }),
            ([r, c], 0) => Ok(Lanes { count: *c, len: *r, lane_stride: 1, elem_stride: *c }),
            _ => Err(NnError::invalid(op, format!("axis {axis} invalid for shape {shape:?}"))),
        }
    }

    fn index(&self, lane: usize, k: usize) -> usize {
        lane * self.lane_stride + k * self.elem_stride
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Copies the value of `v` into a new node that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    /// Leaf node for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: self.store.get(id).trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.map(a, |x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Sum of several same-shaped nodes.
    pub fn add_n(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| NnError::invalid("add_n", "no inputs"))?;
        let mut out = self.value(first).clone();
        for &v in &vars[1..] {
            self.same_shape("add_n", first, v)?;
            axpy(1.0, self.data(v), out.data_mut());
        }
        Ok(self.push(out, Op::AddN(vars.to_vec()), vars))
    }

    /// `[m×k] · [k×n] → [m×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NnError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                axpy(da[i * k + p], &db[p * n..(p + 1) * n], row);
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `[m×k] · [n×k]ᵀ → [m×n]`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(NnError::shape("matmul_nt", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = dot(&da[i * k..(i + 1) * k], &db[j * k..(j + 1) * k]);
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMulNT(a, b), &[a, b]))
    }

    /// `[m×k] · [k] → [m]`
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w), self.shape(x));
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(NnError::shape("matvec", sw, sx));
        }
        let (m, k) = (sw[0], sw[1]);
        let (dw, dx) = (self.data(w), self.data(x));
        let out: Vec<f64> = (0..m).map(|r| dot(&dw[r * k..(r + 1) * k], dx)).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x), &[w, x]))
    }

    /// `[k] · [k×n] → [n]`, i.e. `Aᵀx`.
    pub fn vecmat(&mut self, x: Var, a: Var) -> Result<Var> {
        let (sx, sa) = (self.shape(x), self.shape(a));
        if sa.len() != 2 || sx.len() != 1 || sa[0] != sx[0] {
            return Err(NnError::shape("vecmat", sx, sa));
        }
        let (k, n) = (sa[0], sa[1]);
        let (dx, da) = (self.data(x), self.data(a));
        let mut out = vec![0.0; n];
        for p in 0..k {
            axpy(dx[p], &da[p * n..(p + 1) * n], &mut out);
        }
        Ok(self.push(Tensor::vector(out), Op::VecMat(x, a), &[x, a]))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(NnError::shape("dot", self.shape(a), self.shape(b)));
        }
        let out = dot(self.data(a), self.data(b));
        Ok(self.push(Tensor::scalar(out), Op::Dot(a, b), &[a, b]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.data(a).iter().any(|&x| x <= 0.0) {
            return Err(NnError::invalid("log", "non-positive input"));
        }
        let out = self.map(a, f64::ln);
        Ok(self.push(out, Op::Log(a), &[a]))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x * x);
        self.push(out, Op::Square(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Concatenates rank-1 nodes.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NnError::invalid("concat", "no inputs"));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.value(p).rank() != 1 {
                return Err(NnError::shape("concat", self.shape(p), &[]));
            }
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), parts))
    }

    /// `a[start..start + len]` of a rank-1 node.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(a).len();
        if self.value(a).rank() != 1 || len == 0 || start + len > n {
            return Err(NnError::invalid(
                "slice",
                format!("range {start}..{} out of bounds for {:?}", start + len, self.shape(a)),
            ));
        }
        let out = self.data(a)[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(out), Op::Slice(a, start), &[a]))
    }

    /// Row `r` of a matrix as a rank-1 node (embedding lookup).
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || r >= t.rows() {
            return Err(NnError::invalid(
                "row",
                format!("row {r} out of range for {:?}", t.shape()),
            ));
        }
        let out = t.row(r).to_vec();
        Ok(self.push(Tensor::vector(out), Op::Row(a, r), &[a]))
    }

    /// Stacks equal-length rank-1 nodes as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows
            .first()
            .ok_or_else(|| NnError::invalid("stack", "no inputs"))?;
        let width = self.value(first).len();
        let mut out = Vec::with_capacity(width * rows.len());
        for &r in rows {
            if self.value(r).rank() != 1 || self.value(r).len() != width {
                return Err(NnError::shape("stack", self.shape(first), self.shape(r)));
            }
            out.extend_from_slice(self.data(r));
        }
        let out = Tensor::new(vec![rows.len(), width], out)?;
        Ok(self.push(out, Op::Stack(rows.to_vec()), rows))
    }

    /// Selects entries of a rank-1 node by index.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let d = self.data(a);
        if indices.is_empty() || indices.iter().any(|&i| i >= d.len()) {
            return Err(NnError::invalid(
                "gather",
                format!("indices {indices:?} invalid for length {}", d.len()),
            ));
        }
        let out = indices.iter().map(|&i| d[i]).collect();
        Ok(self.push(Tensor::vector(out), Op::Gather(a, indices.to_vec()), &[a]))
    }

    fn softmax_values(&self, op: &'static str, a: Var, axis: usize, log: bool) -> Result<Tensor> {
        let t = self.value(a);
        let lanes = Lanes::new(op, t.shape(), axis)?;
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for lane in 0..lanes.count {
            let max = (0..lanes.len)
                .map(|k| src[lanes.index(lane, k)])
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..lanes.len).map(|k| (src[lanes.index(lane, k)] - max).exp()).sum();
            let log_z = z.ln();
            for k in 0..lanes.len {
                let idx = lanes.index(lane, k);
                let shifted = src[idx] - max;
                out[idx] = if log { shifted - log_z } else { shifted.exp() / z };
            }
        }
        Tensor::new(t.shape().to_vec(), out)
    }

    /// Softmax along `axis`, computed after subtracting the lane maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.softmax_values("softmax", a, axis, false)?;
        Ok(self.push(out, Op::Softmax(a, axis), &[a]))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.softmax_values("log_softmax", a, axis, true)?;
        Ok(self.push(out, Op::LogSoftmax(a, axis), &[a]))
    }

    /// Inverted dropout: keeps each entry with probability `1 - rate` and scales kept
    /// entries by `1 / (1 - rate)`. Pass `rng = None` at evaluation time for the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: Option<&mut R>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::invalid("dropout", format!("rate {rate} outside [0, 1)")));
        }
        let Some(rng) = rng else { return Ok(a) };
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mask(a, mask), &[a]))
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`, in the
    /// overflow-free form `max(z, 0) - z·y + ln(1 + e^{-|z|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.data(logits);
        if z.len() != targets.len() {
            return Err(NnError::shape("bce_with_logits", self.shape(logits), &[targets.len()]));
        }
        let total: f64 = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(total / z.len() as f64);
        Ok(self.push(out, Op::BceWithLogits(logits, targets.to_vec()), &[logits]))
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every trainable
    /// parameter reachable from it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_t = self.value(loss);
        if !loss_t.is_scalar() {
            return Err(NnError::NonScalarLoss(loss_t.shape().to_vec()));
        }
        let mut out = Gradients::new(self.store.len());
        if !self.nodes[loss.0].needs_grad {
            return Ok(out);
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let out_val = self.value(Var(idx));
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.add(*id, &g),
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |buf| axpy(1.0, &g, buf));
                    self.acc(&mut grads, *b, |buf| axpy(1.0, &g, buf));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |buf| axpy(1.0, &g, buf));
                    self.acc(&mut grads, *b, |buf| axpy(-1.0, &g, buf));
                }
                Op::Mul(a, b) => {
                    let (da, db) = (self.data(*a), self.data(*b));
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(db).for_each(|((o, gi), y)| *o += gi * y)
                    });
                    self.acc(&mut grads, *b, |buf| {
                        buf.iter_mut().zip(&g).zip(da).for_each(|((o, gi), x)| *o += gi * x)
                    });
                }
                Op::Scale(a, f) => self.acc(&mut grads, *a, |buf| axpy(*f, &g, buf)),
                Op::AddN(vars) => {
                    for v in vars {
                        self.acc(&mut grads, *v, |buf| axpy(1.0, &g, buf));
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let (da, db) = (self.data(*a), self.data(*b));
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    self.acc(&mut grads, *a, |buf| {
                        for i in 0..m {
                            for p in 0..k {
                                buf[i * k + p] += dot(&g[i * n..(i + 1) * n], &db[p * n..(p + 1) * n]);
                            }
                        }
                    });
                    self.acc(&mut grads, *b, |buf| {
                        for i in 0..m {
                            for p in 0..k {
                                axpy(da[i * k + p], &g[i * n..(i + 1) * n], &mut buf[p * n..(p + 1) * n]);
                            }
                        }
                    });
                }
                Op::MatMulNT(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (m, k, n) = (sa[0], sa[1], sb[0]);
                    let (da, db) = (self.data(*a), self.data(*b));
                    // out = A·Bᵀ: dA = G·B, dB = Gᵀ·A
                    self.acc(&mut grads, *a, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                axpy(g[i * n + j], &db[j * k..(j + 1) * k], &mut buf[i * k..(i + 1) * k]);
                            }
                        }
                    });
                    self.acc(&mut grads, *b, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                axpy(g[i * n + j], &da[i * k..(i + 1) * k], &mut buf[j * k..(j + 1) * k]);
                            }
                        }
                    });
                }
                Op::MatVec(w, x) => {
                    let k = self.shape(*w)[1];
                    let (dw, dx) = (self.data(*w), self.data(*x));
                    self.acc(&mut grads, *w, |buf| {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(gr, dx, &mut buf[r * k..(r + 1) * k]);
                            }
                        }
                    });
                    self.acc(&mut grads, *x, |buf| {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(gr, &dw[r * k..(r + 1) * k], buf);
                            }
                        }
                    });
                }
                Op::VecMat(x, a) => {
                    let n = self.shape(*a)[1];
                    let (dx, da) = (self.data(*x), self.data(*a));
                    self.acc(&mut grads, *x, |buf| {
                        for (p, o) in buf.iter_mut().enumerate() {
                            *o += dot(&da[p * n..(p + 1) * n], &g);
                        }
                    });
                    self.acc(&mut grads, *a, |buf| {
                        for (p, &xp) in dx.iter().enumerate() {
                            axpy(xp, &g, &mut buf[p * n..(p + 1) * n]);
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let (da, db) = (self.data(*a), self.data(*b));
                    self.acc(&mut grads, *a, |buf| axpy(g[0], db, buf));
                    self.acc(&mut grads, *b, |buf| axpy(g[0], da, buf));
                }
                Op::Relu(a) => {
                    let x = self.data(*a);
                    self.acc(&mut grads, *a, |buf| {
                        for ((o, gi), xi) in buf.iter_mut().zip(&g).zip(x) {
                            if *xi > 0.0 {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = out_val.data();
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(y).for_each(|((o, gi), yi)| *o += gi * yi * (1.0 - yi))
                    });
                }
                Op::Tanh(a) => {
                    let y = out_val.data();
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(y).for_each(|((o, gi), yi)| *o += gi * (1.0 - yi * yi))
                    });
                }
                Op::Exp(a) => {
                    let y = out_val.data();
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(y).for_each(|((o, gi), yi)| *o += gi * yi)
                    });
                }
                Op::Log(a) => {
                    let x = self.data(*a);
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(x).for_each(|((o, gi), xi)| *o += gi / xi)
                    });
                }
                Op::Square(a) => {
                    let x = self.data(*a);
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(x).for_each(|((o, gi), xi)| *o += 2.0 * gi * xi)
                    });
                }
                Op::Sum(a) => self.acc(&mut grads, *a, |buf| buf.iter_mut().for_each(|o| *o += g[0])),
                Op::Mean(a) => {
                    let scale = g[0] / self.value(*a).len() as f64;
                    self.acc(&mut grads, *a, |buf| buf.iter_mut().for_each(|o| *o += scale))
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        self.acc(&mut grads, *p, |buf| axpy(1.0, &g[offset..offset + len], buf));
                        offset += len;
                    }
                }
                Op::Slice(a, start) => {
                    let s = *start;
                    self.acc(&mut grads, *a, |buf| axpy(1.0, &g, &mut buf[s..s + g.len()]));
                }
                Op::Row(a, r) => {
                    let c = g.len();
                    let r = *r;
                    self.acc(&mut grads, *a, |buf| axpy(1.0, &g, &mut buf[r * c..(r + 1) * c]));
                }
                Op::Stack(rows) => {
                    let width = self.value(rows[0]).len();
                    for (i, r) in rows.iter().enumerate() {
                        self.acc(&mut grads, *r, |buf| axpy(1.0, &g[i * width..(i + 1) * width], buf));
                    }
                }
                Op::Gather(a, indices) => {
                    self.acc(&mut grads, *a, |buf| {
                        for (gi, &i) in g.iter().zip(indices) {
                            buf[i] += gi;
                        }
                    });
                }
                Op::Softmax(a, axis) => {
                    let y = out_val.data();
                    let lanes = Lanes::new("softmax", out_val.shape(), *axis)?;
                    self.acc(&mut grads, *a, |buf| {
                        for lane in 0..lanes.count {
                            let s: f64 = (0..lanes.len)
                                .map(|k| {
                                    let i = lanes.index(lane, k);
                                    g[i] * y[i]
                                })
                                .sum();
                            for k in 0..lanes.len {
                                let i = lanes.index(lane, k);
                                buf[i] += y[i] * (g[i] - s);
                            }
                        }
                    });
                }
                Op::LogSoftmax(a, axis) => {
                    let y = out_val.data();
                    let lanes = Lanes::new("log_softmax", out_val.shape(), *axis)?;
                    self.acc(&mut grads, *a, |buf| {
                        for lane in 0..lanes.count {
                            let s: f64 = (0..lanes.len).map(|k| g[lanes.index(lane, k)]).sum();
                            for k in 0..lanes.len {
                                let i = lanes.index(lane, k);
                                buf[i] += g[i] - y[i].exp() * s;
                            }
                        }
                    });
                }
                Op::Mask(a, mask) => {
                    self.acc(&mut grads, *a, |buf| {
                        buf.iter_mut().zip(&g).zip(mask).for_each(|((o, gi), m)| *o += gi * m)
                    });
                }
                Op::BceWithLogits(a, targets) => {
                    let z = self.data(*a);
                    let scale = g[0] / z.len() as f64;
                    self.acc(&mut grads, *a, |buf| {
                        for ((o, &zi), &yi) in buf.iter_mut().zip(z).zip(targets) {
                            *o += scale * (sigmoid(zi) - yi);
                        }
                    });
                }
            }
        }
        Ok(out)
    }

    /// Runs `f` on the gradient buffer of `v`, allocating it on first use. Skips
    /// nodes that cannot reach a trainable parameter.
    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let len = self.value(v).len();
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(buf);
    }
}

/// Softmax of a plain slice, for inference code that does not need a graph.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}
