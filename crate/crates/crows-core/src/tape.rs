//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every forward op as an append-only node list; node ids
//! are handles into the tape. Because inputs always precede outputs, walking
//! the node list in reverse is a reverse topological traversal, so
//! [`Tape::backward`] visits each node exactly once and accumulates
//! gradients for shared subexpressions by summation.
//!
//! The tape is dynamic: it is rebuilt on every forward pass and dropped when
//! the gradients have been harvested. One tape is single-threaded; separate
//! tapes share nothing.
//!
//! Shape rules are strict. The only broadcast is bias addition: a `[n]` or
//! `[1, n]` vector may be added to (or subtracted from) the rows of an
//! `[m, n]` matrix. Everything else must match exactly and fails with
//! [`Error::ShapeMismatch`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        input: NodeId,
        start: usize,
        len: usize,
    },
    Sum(NodeId),
    Mean(NodeId),
    Softmax(NodeId),
    Stack(Vec<NodeId>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the given node, if it
    /// participated in the loss.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

/// Recording tape. Create one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

// Last-axis layout of a tensor: (number of rows, row length).
fn rows_of(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[..shape.len() - 1].iter().product(), shape[shape.len() - 1]),
    }
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
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

    /// Records an input tensor and returns its handle.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Records a constant with no interesting gradient. Identical to
    /// [`Tape::leaf`]; the distinction is for the reader.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        id
    }

    // Add/sub share their shape rule: exact match, or rhs a bias row.
    fn zip_or_bias(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let data = if va.shape() == vb.shape() {
            va.iter().zip(vb.iter()).map(|(x, y)| f(*x, *y)).collect()
        } else {
            let (rows, cols) = rows_of(va.shape());
            let (brows, bcols) = rows_of(vb.shape());
            if brows != 1 || bcols != cols || va.shape().len() < 2 {
                return Err(mismatch(op_name, va, vb));
            }
            let mut out = Vec::with_capacity(rows * cols);
            let bias = vb.data();
            for r in 0..rows {
                let row = &va.data()[r * cols..(r + 1) * cols];
                out.extend(row.iter().zip(bias.iter()).map(|(x, y)| f(*x, *y)));
            }
            out
        };
        let shape = self.nodes[a].value.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, op))
    }

    /// Elementwise sum; `b` may be a bias row added to each row of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_or_bias("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// Elementwise difference; `b` may be a bias row.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_or_bias("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product. Shapes must match exactly.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.shape() != vb.shape() {
            return Err(mismatch("mul", va, vb));
        }
        let data = va.iter().zip(vb.iter()).map(|(x, y)| x * y).collect();
        let shape = va.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b)))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(mismatch("matmul", va, vb));
        }
        let (m, k) = (va.shape()[0], va.shape()[1]);
        let n = vb.shape()[1];
        let out = matmul_raw(va.data(), vb.data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Matmul(a, b)))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, fmath::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, |x| 1.0 / (1.0 + fmath::exp(-x)), Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map(a, fmath::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.map(a, fmath::ln, Op::Log(a))
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let va = &self.nodes[a].value;
        let data = va.iter().map(|x| f(*x)).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::new(shape, data).expect("map preserves shape"), op)
    }

    /// Concatenates along the last axis. All inputs must agree on the
    /// leading dimensions.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = &self.nodes[parts[0]].value;
        let (rows, _) = rows_of(first.shape());
        let rank = first.shape().len();
        let mut total_cols = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            let (r, c) = rows_of(v.shape());
            if r != rows || v.shape().len() != rank {
                return Err(mismatch("concat", first, v));
            }
            total_cols += c;
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for r in 0..rows {
            for &p in parts {
                let v = &self.nodes[p].value;
                let c = rows_of(v.shape()).1;
                data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = first.shape().to_vec();
        *shape.last_mut().unwrap() = total_cols;
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(parts.to_vec())))
    }

    /// Takes `len` consecutive entries of the last axis starting at `start`.
    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = &self.nodes[input].value;
        let (rows, cols) = rows_of(v.shape());
        if start + len > cols {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: v.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&v.data()[r * cols + start..r * cols + start + len]);
        }
        let mut shape = v.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(self.push(Tensor::new(shape, data)?, Op::Slice { input, start, len }))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a].value.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let s: f64 = v.iter().sum();
        let m = s / v.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// Softmax along the last axis, with max subtraction for stability.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let (rows, cols) = rows_of(v.shape());
        let mut data = vec![0.0; v.numel()];
        for r in 0..rows {
            let row = &v.data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (i, x) in row.iter().enumerate() {
                let e = fmath::exp(x - max);
                data[r * cols + i] = e;
                denom += e;
            }
            for i in 0..cols {
                data[r * cols + i] /= denom;
            }
        }
        let shape = v.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("softmax preserves shape"),
            Op::Softmax(a),
        )
    }

    /// Stacks k same-shaped vectors (or `[1, n]` rows) into a `[k, n]` matrix.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        assert!(!parts.is_empty(), "stack of nothing");
        let first = &self.nodes[parts[0]].value;
        let (r0, cols) = rows_of(first.shape());
        if r0 != 1 {
            return Err(mismatch("stack", first, first));
        }
        let mut data = Vec::with_capacity(parts.len() * cols);
        for &p in parts {
            let v = &self.nodes[p].value;
            let (r, c) = rows_of(v.shape());
            if r != 1 || c != cols {
                return Err(mismatch("stack", first, v));
            }
            data.extend_from_slice(v.data());
        }
        Ok(self.push(
            Tensor::new(vec![parts.len(), cols], data)?,
            Op::Stack(parts.to_vec()),
        ))
    }

    // Convenience wrappers built from the primitive ops above; each records
    // a constant leaf rather than introducing a new op kind.

    /// Multiplies every entry by a constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.nodes[a].value.shape().to_vec();
        let k = self.constant(Tensor::filled(&shape, c));
        self.mul(a, k).expect("same shape by construction")
    }

    /// Adds a constant to every entry.
    pub fn shift(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.nodes[a].value.shape().to_vec();
        let k = self.constant(Tensor::filled(&shape, c));
        self.add(a, k).expect("same shape by construction")
    }

    /// Backpropagates from a scalar loss, returning a gradient per node.
    ///
    /// Gradients of leaves that feed multiple ops accumulate by summation.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = &self.nodes[loss].value;
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::new(loss_value.shape().to_vec(), vec![1.0]).unwrap());

        for id in (0..=loss).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &grad, &mut grads);
            grads[id] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: NodeId, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, self.shape_of(*a), grad.data());
                self.accumulate_maybe_bias(grads, *b, grad);
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, self.shape_of(*a), grad.data());
                let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                let neg = Tensor::new(grad.shape().to_vec(), neg).unwrap();
                self.accumulate_maybe_bias(grads, *b, &neg);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let da: Vec<f64> = grad.iter().zip(vb.iter()).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = grad.iter().zip(va.iter()).map(|(g, x)| g * x).collect();
                accumulate(grads, *a, va.shape(), &da);
                accumulate(grads, *b, vb.shape(), &db);
            }
            Op::Matmul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = vb.shape()[1];
                // dA = G B^T, dB = A^T G
                let bt = transpose(vb.data(), k, n);
                let da = matmul_raw(grad.data(), &bt, m, n, k);
                let at = transpose(va.data(), m, k);
                let db = matmul_raw(&at, grad.data(), k, m, n);
                accumulate(grads, *a, va.shape(), &da);
                accumulate(grads, *b, vb.shape(), &db);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let da: Vec<f64> = grad
                    .iter()
                    .zip(y.iter())
                    .map(|(g, t)| g * (1.0 - t * t))
                    .collect();
                accumulate(grads, *a, self.shape_of(*a), &da);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let da: Vec<f64> = grad
                    .iter()
                    .zip(y.iter())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                accumulate(grads, *a, self.shape_of(*a), &da);
            }
            Op::Exp(a) => {
                let y = &node.value;
                let da: Vec<f64> = grad.iter().zip(y.iter()).map(|(g, e)| g * e).collect();
                accumulate(grads, *a, self.shape_of(*a), &da);
            }
            Op::Log(a) => {
                let x = &self.nodes[*a].value;
                let da: Vec<f64> = grad.iter().zip(x.iter()).map(|(g, v)| g / v).collect();
                accumulate(grads, *a, self.shape_of(*a), &da);
            }
            Op::Concat(parts) => {
                let (rows, _) = rows_of(grad.shape());
                let gcols = rows_of(grad.shape()).1;
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape_of(p);
                    let c = rows_of(shape).1;
                    let mut dp = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        dp.extend_from_slice(
                            &grad.data()[r * gcols + offset..r * gcols + offset + c],
                        );
                    }
                    accumulate(grads, p, shape, &dp);
                    offset += c;
                }
            }
            Op::Slice { input, start, len } => {
                let shape = self.shape_of(*input);
                let (rows, cols) = rows_of(shape);
                let mut da = vec![0.0; rows * cols];
                for r in 0..rows {
                    for i in 0..*len {
                        da[r * cols + start + i] = grad.data()[r * len + i];
                    }
                }
                accumulate(grads, *input, shape, &da);
            }
            Op::Sum(a) => {
                let shape = self.shape_of(*a);
                let n: usize = shape.iter().product();
                let da = vec![grad.item(); n];
                accumulate(grads, *a, shape, &da);
            }
            Op::Mean(a) => {
                let shape = self.shape_of(*a);
                let n: usize = shape.iter().product();
                let da = vec![grad.item() / n as f64; n];
                accumulate(grads, *a, shape, &da);
            }
            Op::Softmax(a) => {
                // Per row: dx_i = y_i (g_i - sum_j g_j y_j)
                let y = &node.value;
                let (rows, cols) = rows_of(y.shape());
                let mut da = vec![0.0; y.numel()];
                for r in 0..rows {
                    let yr = &y.data()[r * cols..(r + 1) * cols];
                    let gr = &grad.data()[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr.iter()).map(|(yi, gi)| yi * gi).sum();
                    for i in 0..cols {
                        da[r * cols + i] = yr[i] * (gr[i] - dot);
                    }
                }
                accumulate(grads, *a, self.shape_of(*a), &da);
            }
            Op::Stack(parts) => {
                let cols = rows_of(grad.shape()).1;
                for (row, &p) in parts.iter().enumerate() {
                    let dp = &grad.data()[row * cols..(row + 1) * cols];
                    accumulate(grads, p, self.shape_of(p), dp);
                }
            }
        }
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        self.nodes[id].value.shape()
    }

    // Gradient flowing into the second operand of add/sub, which may be a
    // bias row broadcast over matrix rows: reduce by column sums.
    fn accumulate_maybe_bias(&self, grads: &mut [Option<Tensor>], b: NodeId, grad: &Tensor) {
        let shape = self.shape_of(b);
        if shape == grad.shape() {
            accumulate(grads, b, shape, grad.data());
            return;
        }
        let (rows, cols) = rows_of(grad.shape());
        let mut db = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                db[c] += grad.data()[r * cols + c];
            }
        }
        accumulate(grads, b, shape, &db);
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, shape: &[usize], delta: &[f64]) {
    match &mut grads[id] {
        Some(g) => {
            for (gi, d) in g.data_mut().iter_mut().zip(delta.iter()) {
                *gi += d;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), delta.to_vec()).unwrap());
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let i = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let c = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[0.0, 0.0, 0.0]));
        let y = tape.softmax(x);
        for v in tape.value(y).iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.tanh(x);
        assert_eq!(tape.value(y).item(), 0.0);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, 2.0]));
        assert!(matches!(
            tape.backward(x),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = tape.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let err = tape.matmul(a, b).unwrap_err();
        match err {
            Error::ShapeMismatch { op, lhs, rhs } => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    // Shared-subexpression gradients must equal the expanded expression's.
    #[test]
    fn shared_subexpression_accumulation() {
        // f = s + s with s = x * y, versus g = x*y + x*y written out twice.
        let mut t1 = Tape::new();
        let x1 = t1.leaf(Tensor::vector(&[1.5, -2.0]));
        let y1 = t1.leaf(Tensor::vector(&[0.5, 3.0]));
        let s = t1.mul(x1, y1).unwrap();
        let f = t1.add(s, s).unwrap();
        let f = t1.sum(f);
        let g1 = t1.backward(f).unwrap();

        let mut t2 = Tape::new();
        let x2 = t2.leaf(Tensor::vector(&[1.5, -2.0]));
        let y2 = t2.leaf(Tensor::vector(&[0.5, 3.0]));
        let s_a = t2.mul(x2, y2).unwrap();
        let s_b = t2.mul(x2, y2).unwrap();
        let g = t2.add(s_a, s_b).unwrap();
        let g = t2.sum(g);
        let g2 = t2.backward(g).unwrap();

        assert_eq!(g1.get(x1).unwrap().data(), g2.get(x2).unwrap().data());
        assert_eq!(g1.get(y1).unwrap().data(), g2.get(y2).unwrap().data());
    }

    #[test]
    fn bias_row_broadcast() {
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = tape.leaf(Tensor::vector(&[10.0, 20.0, 30.0]));
        let y = tape.add(m, b).unwrap();
        assert_eq!(
            tape.value(y).data(),
            &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]
        );
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        // Bias gradient is the column sum of ones: one per row.
        assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_slice_roundtrip_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::row(&[1.0, 2.0]));
        let b = tape.leaf(Tensor::row(&[3.0, 4.0, 5.0]));
        let cat = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(cat).shape(), &[1, 5]);
        let piece = tape.slice(cat, 1, 3).unwrap();
        assert_eq!(tape.value(piece).data(), &[2.0, 3.0, 4.0]);
        let s = tape.sum(piece);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::vector(&[0.3, -1.2, 2.7]));
            let y = tape.softmax(x);
            let z = tape.tanh(y);
            let s = tape.mean(z);
            tape.value(s).item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
