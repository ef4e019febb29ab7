use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::fmt;

use super::{matmul_nt, matmul_raw, matmul_tn, Activation, AxisLayout, Tensor};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

/// Slices whose Euclidean norm falls below this are left unnormalized.
pub const DEGENERATE_NORM: f64 = 1e-12;

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    /// Matrix (or vector) plus a row vector repeated over rows.
    AddRow(usize, usize),
    Mul(usize, usize),
    /// `scale·x + shift`
    Affine(usize, f64),
    Act(usize, Activation),
    Softmax(usize, usize),
    L2Normalize {
        input: usize,
        axis: usize,
        norms: Vec<f64>,
    },
    CrossEntropy {
        input: usize,
        target: usize,
        probs: Vec<f64>,
    },
    Concat(Vec<usize>, usize),
    Sum(usize, usize),
    Mean(usize, usize),
    SumAll(usize),
    Reshape(usize),
    Transpose(usize),
    GatherRows {
        table: usize,
        ids: Vec<usize>,
        frozen_row: Option<usize>,
    },
    Row(usize, usize),
    RepeatRows(usize),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Affine(a, _)
            | Op::Act(a, _)
            | Op::Softmax(a, _)
            | Op::Sum(a, _)
            | Op::Mean(a, _)
            | Op::SumAll(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Row(a, _)
            | Op::RepeatRows(a) => vec![*a],
            Op::L2Normalize { input, .. } | Op::CrossEntropy { input, .. } => vec![*input],
            Op::Concat(v, _) => v.clone(),
            Op::GatherRows { table, .. } => vec![*table],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations.
///
/// A tape supports exactly one [`backward`](Tape::backward) call; a second
/// call fails instead of silently accumulating.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<HashMap<ParamId, usize>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push_op(&self, value: Tensor, op: Op) -> Var<'_> {
        let rg = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|&i| nodes[i].requires_grad)
        };
        self.push(value, op, rg)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    /// Binds a stored parameter; repeated binds of the same id share a node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.params.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let p = store.get(id);
        let var = self.leaf(p.value.clone(), p.trainable);
        self.params.borrow_mut().insert(id, var.id);
        var
    }

    fn value_ref(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse replay from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Contract("loss belongs to a different tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::Contract("backward called twice on one tape".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape().to_vec(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let mut out: Vec<Option<Tensor>> = Vec::with_capacity(nodes.len());
        for (node, g) in nodes.iter().zip(grads) {
            out.push(if node.requires_grad {
                Some(g.unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec())))
            } else {
                None
            });
        }
        let params = self
            .params
            .borrow()
            .iter()
            .map(|(&p, &n)| (p, n))
            .collect();
        Ok(Gradients { grads: out, params })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let node = &nodes[id];
    let rg = |i: usize| nodes[i].requires_grad;
    let val = |i: usize| &nodes[i].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, n) = val(*a).as_matrix_dims().unwrap();
            let p = val(*b).shape()[1];
            if rg(*a) {
                let d = matmul_nt(g.data(), val(*b).data(), m, p, n);
                accumulate(grads, *a, with_shape(val(*a), d));
            }
            if rg(*b) {
                let d = matmul_tn(val(*a).data(), g.data(), m, n, p);
                accumulate(grads, *b, with_shape(val(*b), d));
            }
        }
        Op::Add(a, b) => {
            for i in [*a, *b] {
                if rg(i) {
                    accumulate(grads, i, g.clone());
                }
            }
        }
        Op::AddRow(a, r) => {
            if rg(*a) {
                accumulate(grads, *a, g.clone());
            }
            if rg(*r) {
                let cols = val(*r).numel();
                let mut d = vec![0.0; cols];
                for chunk in g.data().chunks(cols) {
                    for (x, y) in d.iter_mut().zip(chunk) {
                        *x += y;
                    }
                }
                accumulate(grads, *r, with_shape(val(*r), d));
            }
        }
        Op::Mul(a, b) => {
            if rg(*a) {
                let d = zip_map(g.data(), val(*b).data(), |x, y| x * y);
                accumulate(grads, *a, with_shape(val(*a), d));
            }
            if rg(*b) {
                let d = zip_map(g.data(), val(*a).data(), |x, y| x * y);
                accumulate(grads, *b, with_shape(val(*b), d));
            }
        }
        Op::Affine(a, scale) => {
            accumulate(grads, *a, g.map(|x| x * scale));
        }
        Op::Act(a, kind) => {
            let d = zip_map(g.data(), val(*a).data(), |gv, x| gv * kind.derivative(x));
            accumulate(grads, *a, with_shape(val(*a), d));
        }
        Op::Softmax(a, axis) => {
            let y = &node.value;
            let l = y.axis_layout(*axis).unwrap();
            let mut d = vec![0.0; y.numel()];
            for (o, i) in l.slices() {
                let mut dot = 0.0;
                for k in 0..l.len {
                    let ix = l.index(o, k, i);
                    dot += g.data()[ix] * y.data()[ix];
                }
                for k in 0..l.len {
                    let ix = l.index(o, k, i);
                    d[ix] = y.data()[ix] * (g.data()[ix] - dot);
                }
            }
            accumulate(grads, *a, with_shape(y, d));
        }
        Op::L2Normalize { input, axis, norms } => {
            let y = &node.value;
            let l = y.axis_layout(*axis).unwrap();
            let mut d = vec![0.0; y.numel()];
            for (s, (o, i)) in l.slices().enumerate() {
                let norm = norms[s];
                if norm < DEGENERATE_NORM {
                    for k in 0..l.len {
                        let ix = l.index(o, k, i);
                        d[ix] = g.data()[ix];
                    }
                    continue;
                }
                let mut dot = 0.0;
                for k in 0..l.len {
                    let ix = l.index(o, k, i);
                    dot += g.data()[ix] * y.data()[ix];
                }
                for k in 0..l.len {
                    let ix = l.index(o, k, i);
                    d[ix] = (g.data()[ix] - y.data()[ix] * dot) / norm;
                }
            }
            accumulate(grads, *input, with_shape(y, d));
        }
        Op::CrossEntropy {
            input,
            target,
            probs,
        } => {
            let gv = g.item();
            let mut d: Vec<f64> = probs.iter().map(|p| gv * p).collect();
            d[*target] -= gv;
            accumulate(grads, *input, with_shape(val(*input), d));
        }
        Op::Concat(inputs, axis) => {
            let out_l = node.value.axis_layout(*axis).unwrap();
            let mut offset = 0;
            for &inp in inputs {
                let l = val(inp).axis_layout(*axis).unwrap();
                if rg(inp) {
                    let mut d = vec![0.0; val(inp).numel()];
                    for o in 0..l.outer {
                        for k in 0..l.len {
                            for i in 0..l.inner {
                                d[l.index(o, k, i)] = g.data()[out_l.index(o, offset + k, i)];
                            }
                        }
                    }
                    accumulate(grads, inp, with_shape(val(inp), d));
                }
                offset += l.len;
            }
        }
        Op::Sum(a, axis) | Op::Mean(a, axis) => {
            let x = val(*a);
            let l = x.axis_layout(*axis).unwrap();
            let scale = match node.op {
                Op::Mean(..) => 1.0 / l.len as f64,
                _ => 1.0,
            };
            let mut d = vec![0.0; x.numel()];
            for o in 0..l.outer {
                for k in 0..l.len {
                    for i in 0..l.inner {
                        d[l.index(o, k, i)] = g.data()[o * l.inner + i] * scale;
                    }
                }
            }
            accumulate(grads, *a, with_shape(x, d));
        }
        Op::SumAll(a) => {
            accumulate(grads, *a, Tensor::full(val(*a).shape().to_vec(), g.item()));
        }
        Op::Reshape(a) => {
            accumulate(grads, *a, with_shape(val(*a), g.data().to_vec()));
        }
        Op::Transpose(a) => {
            let (r, c) = (g.shape()[0], g.shape()[1]);
            accumulate(grads, *a, with_shape(val(*a), transpose_raw(g.data(), r, c)));
        }
        Op::GatherRows {
            table,
            ids,
            frozen_row,
        } => {
            let t = val(*table);
            let cols = t.shape()[1];
            let mut d = vec![0.0; t.numel()];
            for (r, &row) in ids.iter().enumerate() {
                if Some(row) == *frozen_row {
                    continue;
                }
                for c in 0..cols {
                    d[row * cols + c] += g.data()[r * cols + c];
                }
            }
            accumulate(grads, *table, with_shape(t, d));
        }
        Op::Row(a, r) => {
            let x = val(*a);
            let cols = x.shape()[1];
            let mut d = vec![0.0; x.numel()];
            d[r * cols..(r + 1) * cols].copy_from_slice(g.data());
            accumulate(grads, *a, with_shape(x, d));
        }
        Op::RepeatRows(a) => {
            let n = val(*a).numel();
            let mut d = vec![0.0; n];
            for chunk in g.data().chunks(n) {
                for (x, y) in d.iter_mut().zip(chunk) {
                    *x += y;
                }
            }
            accumulate(grads, *a, with_shape(val(*a), d));
        }
    }
}

fn with_shape(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor {
        shape: like.shape().to_vec(),
        data,
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn transpose_raw(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.tape.value_ref(self.id).data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract("operands recorded on different tapes".into()))
        }
    }

    fn unary(&self, op: Op, f: impl FnOnce(&Tensor) -> Tensor) -> Var<'t> {
        let value = f(&self.tape.value_ref(self.id));
        self.tape.push_op(value, op)
    }

    /// Matrix product; a vector operand on the left is treated as one row.
    pub fn matmul(&self, rhs: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(rhs)?;
        let value = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(rhs.id);
            let (Some((m, n)), [n2, p]) = (a.as_matrix_dims(), b.shape()) else {
                return Err(Error::dim("matmul", a.shape(), b.shape()));
            };
            if n != *n2 {
                return Err(Error::dim("matmul", a.shape(), b.shape()));
            }
            let data = matmul_raw(a.data(), b.data(), m, n, *p);
            let shape = if a.rank() == 1 { vec![*p] } else { vec![m, *p] };
            Tensor { shape, data }
        };
        Ok(self.tape.push_op(value, Op::MatMul(self.id, rhs.id)))
    }

    fn elementwise(
        &self,
        rhs: &Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(rhs)?;
        let value = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(rhs.id);
            if a.shape() != b.shape() {
                return Err(Error::dim(name, a.shape(), b.shape()));
            }
            with_shape(&a, zip_map(a.data(), b.data(), f))
        };
        Ok(self.tape.push_op(value, op))
    }

    pub fn add(&self, rhs: &Var<'t>) -> Result<Var<'t>> {
        self.elementwise(rhs, "add", Op::Add(self.id, rhs.id), |x, y| x + y)
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&self, rhs: &Var<'t>) -> Result<Var<'t>> {
        self.elementwise(rhs, "mul", Op::Mul(self.id, rhs.id), |x, y| x * y)
    }

    /// Adds a row vector to every row (or to a vector of equal length).
    pub fn add_row(&self, row: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(row)?;
        let value = {
            let a = self.tape.value_ref(self.id);
            let r = self.tape.value_ref(row.id);
            let cols = *a.shape().last().unwrap_or(&0);
            if r.rank() != 1 || r.numel() != cols || a.rank() > 2 {
                return Err(Error::dim("add_row", a.shape(), r.shape()));
            }
            let mut out = a.clone();
            for chunk in out.data_mut().chunks_mut(cols) {
                for (x, y) in chunk.iter_mut().zip(r.data()) {
                    *x += y;
                }
            }
            out
        };
        Ok(self.tape.push_op(value, Op::AddRow(self.id, row.id)))
    }

    /// `scale·x + shift`
    pub fn affine(&self, scale: f64, shift: f64) -> Var<'t> {
        self.unary(Op::Affine(self.id, scale), |t| t.map(|x| scale * x + shift))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.affine(s, 0.0)
    }

    /// `1 − x`
    pub fn one_minus(&self) -> Var<'t> {
        self.affine(-1.0, 1.0)
    }

    pub fn activation(&self, kind: Activation) -> Var<'t> {
        self.unary(Op::Act(self.id, kind), |t| t.map(|x| kind.apply(x)))
    }

    pub fn relu(&self) -> Var<'t> {
        self.activation(Activation::Relu)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.activation(Activation::Tanh)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.activation(Activation::Sigmoid)
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value_ref(self.id);
            softmax(&x, axis)?
        };
        Ok(self.tape.push_op(value, Op::Softmax(self.id, axis)))
    }

    /// Unit-L2 slices along `axis`. Slices with norm below
    /// [`DEGENERATE_NORM`] pass through unchanged; their positions (in
    /// slice order) are returned as flags.
    pub fn l2_normalize(&self, axis: usize) -> Result<(Var<'t>, Vec<bool>)> {
        let (value, norms) = {
            let x = self.tape.value_ref(self.id);
            let l = x.axis_layout(axis)?;
            let mut out = x.clone();
            let mut norms = Vec::with_capacity(l.outer * l.inner);
            for (o, i) in l.slices() {
                let mut sq = 0.0;
                for k in 0..l.len {
                    let v = x.data()[l.index(o, k, i)];
                    sq += v * v;
                }
                let norm = sq.sqrt();
                norms.push(norm);
                if norm >= DEGENERATE_NORM {
                    for k in 0..l.len {
                        out.data_mut()[l.index(o, k, i)] /= norm;
                    }
                }
            }
            (out, norms)
        };
        let flags = norms.iter().map(|&n| n < DEGENERATE_NORM).collect();
        let var = self.tape.push_op(
            value,
            Op::L2Normalize {
                input: self.id,
                axis,
                norms,
            },
        );
        Ok((var, flags))
    }

    /// `−log softmax(logits)[target]` for a logit vector.
    pub fn cross_entropy(&self, target: usize) -> Result<Var<'t>> {
        let (loss, probs) = {
            let x = self.tape.value_ref(self.id);
            if x.rank() != 1 {
                return Err(Error::dim("cross_entropy", x.shape(), &[]));
            }
            if target >= x.numel() {
                return Err(Error::Index {
                    what: "cross_entropy classes",
                    index: target,
                    len: x.numel(),
                });
            }
            let probs = softmax(&x, 0)?.into_data();
            let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + x.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            (lse - x.data()[target], probs)
        };
        Ok(self.tape.push_op(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                input: self.id,
                target,
                probs,
            },
        ))
    }

    pub fn concat(&self, rhs: &Var<'t>, axis: usize) -> Result<Var<'t>> {
        Var::concat_all(&[*self, *rhs], axis)
    }

    pub fn concat_all(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let tape = first.tape;
        let value = {
            let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| tape.value_ref(p.id)).collect();
            let base = vals[0].shape().to_vec();
            let mut total = 0;
            for v in &vals {
                let s = v.shape();
                let compatible = s.len() == base.len()
                    && axis < s.len()
                    && s.iter()
                        .zip(&base)
                        .enumerate()
                        .all(|(d, (a, b))| d == axis || a == b);
                if !compatible {
                    return Err(Error::dim("concat", &base, s));
                }
                total += s[axis];
            }
            let mut shape = base.clone();
            shape[axis] = total;
            let out_l = AxisLayout::new(&shape, axis)?;
            let mut data = vec![0.0; shape.iter().product()];
            let mut offset = 0;
            for v in &vals {
                let l = v.axis_layout(axis)?;
                for o in 0..l.outer {
                    for k in 0..l.len {
                        for i in 0..l.inner {
                            data[out_l.index(o, offset + k, i)] = v.data()[l.index(o, k, i)];
                        }
                    }
                }
                offset += l.len;
            }
            Tensor { shape, data }
        };
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(tape.push_op(value, Op::Concat(ids, axis)))
    }

    fn reduce(&self, axis: usize, mean: bool) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value_ref(self.id);
            let l = x.axis_layout(axis)?;
            let mut shape = x.shape().to_vec();
            shape.remove(axis);
            let mut data = vec![0.0; l.outer * l.inner];
            for (o, i) in l.slices() {
                let mut acc = 0.0;
                for k in 0..l.len {
                    acc += x.data()[l.index(o, k, i)];
                }
                data[o * l.inner + i] = if mean { acc / l.len as f64 } else { acc };
            }
            Tensor { shape, data }
        };
        let op = if mean {
            Op::Mean(self.id, axis)
        } else {
            Op::Sum(self.id, axis)
        };
        Ok(self.tape.push_op(value, op))
    }

    pub fn sum(&self, axis: usize) -> Result<Var<'t>> {
        self.reduce(axis, false)
    }

    pub fn mean(&self, axis: usize) -> Result<Var<'t>> {
        self.reduce(axis, true)
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&self) -> Var<'t> {
        self.unary(Op::SumAll(self.id), |t| {
            Tensor::scalar(t.data().iter().sum())
        })
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.tape.value_ref(self.id).clone().reshape(shape)?;
        Ok(self.tape.push_op(value, Op::Reshape(self.id)))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value_ref(self.id);
            let [r, c] = x.shape() else {
                return Err(Error::dim("transpose", x.shape(), &[]));
            };
            Tensor {
                shape: vec![*c, *r],
                data: transpose_raw(x.data(), *r, *c),
            }
        };
        Ok(self.tape.push_op(value, Op::Transpose(self.id)))
    }

    /// Row lookup into a `rows×cols` table. Gradients never reach
    /// `frozen_row`.
    pub fn gather_rows(&self, ids: &[usize], frozen_row: Option<usize>) -> Result<Var<'t>> {
        let value = {
            let t = self.tape.value_ref(self.id);
            let [rows, cols] = t.shape() else {
                return Err(Error::dim("gather_rows", t.shape(), &[]));
            };
            let mut data = Vec::with_capacity(ids.len() * cols);
            for &id in ids {
                if id >= *rows {
                    return Err(Error::Index {
                        what: "table rows",
                        index: id,
                        len: *rows,
                    });
                }
                data.extend_from_slice(t.row(id));
            }
            if ids.is_empty() {
                return Err(Error::Contract("gather of zero rows".into()));
            }
            Tensor {
                shape: vec![ids.len(), *cols],
                data,
            }
        };
        Ok(self.tape.push_op(
            value,
            Op::GatherRows {
                table: self.id,
                ids: ids.to_vec(),
                frozen_row,
            },
        ))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&self, index: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value_ref(self.id);
            let [rows, _] = x.shape() else {
                return Err(Error::dim("row", x.shape(), &[]));
            };
            if index >= *rows {
                return Err(Error::Index {
                    what: "matrix rows",
                    index,
                    len: *rows,
                });
            }
            Tensor::vector(x.row(index).to_vec())
        };
        Ok(self.tape.push_op(value, Op::Row(self.id, index)))
    }

    /// Tiles a vector into `times` identical rows.
    pub fn repeat_rows(&self, times: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value_ref(self.id);
            if x.rank() != 1 || times == 0 {
                return Err(Error::dim("repeat_rows", x.shape(), &[times]));
            }
            let mut data = Vec::with_capacity(times * x.numel());
            for _ in 0..times {
                data.extend_from_slice(x.data());
            }
            Tensor {
                shape: vec![times, x.numel()],
                data,
            }
        };
        Ok(self.tape.push_op(value, Op::RepeatRows(self.id)))
    }
}

pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if !x.all_finite() {
        return Err(Error::NumericDomain {
            op: "softmax",
            detail: "non-finite input".into(),
        });
    }
    let l = x.axis_layout(axis)?;
    let mut out = x.clone();
    for (o, i) in l.slices() {
        let mut max = f64::NEG_INFINITY;
        for k in 0..l.len {
            max = max.max(x.data()[l.index(o, k, i)]);
        }
        let mut total = 0.0;
        for k in 0..l.len {
            let ix = l.index(o, k, i);
            let e = (x.data()[ix] - max).exp();
            out.data_mut()[ix] = e;
            total += e;
        }
        for k in 0..l.len {
            out.data_mut()[l.index(o, k, i)] /= total;
        }
    }
    Ok(out)
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; `None` when `var` does
    /// not require gradients.
    pub fn wrt(&self, var: &Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradients of every bound parameter that requires them.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(p, n)| self.grads[n].as_ref().map(|g| (p, g)))
    }

    /// Adds each parameter gradient into the store's grad buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        let mut ordered: Vec<_> = self.params().collect();
        ordered.sort_by_key(|(p, _)| *p);
        for (id, g) in ordered {
            let param = store.get_mut(id);
            match &mut param.grad {
                Some(buf) => {
                    for (a, b) in buf.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(g.clone()),
            }
        }
    }
}
