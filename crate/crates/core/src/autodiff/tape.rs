//! The operation tape and the tensor handle type.

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

use super::param::Param;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported shape {shape:?}")]
    BadShape { op: &'static str, shape: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("operands belong to different tapes")]
    TapeMismatch,
    #[error("{op}: empty operand list")]
    EmptyOperands { op: &'static str },
    #[error("index {index} out of bounds for axis of length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("non-finite value encountered in {op}")]
    NonFinite { op: &'static str },
}

/// One recorded operation; parents are node indices on the same tape.
#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Add { a: usize, b: usize },
    /// matrix [n,d] plus bias [d] added to every row.
    AddBiasRows { a: usize, bias: usize },
    /// matrix [m,n] plus bias [m] added to every column.
    AddBiasCols { a: usize, bias: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: S },
    Relu { a: usize },
    Sigmoid { a: usize },
    Tanh { a: usize },
    Ln { a: usize },
    Clamp { a: usize, lo: S, hi: S },
    /// softmax over the last axis, max-subtracted for stability.
    Softmax { a: usize },
    MatMul { a: usize, b: usize },
    Transpose { a: usize },
    /// 1-D concatenation.
    Concat { parts: Vec<usize> },
    /// stack k vectors of length d into a [k,d] matrix.
    StackRows { parts: Vec<usize> },
    /// mean over one axis; `axis` is 0 or 1 for matrices, 0 for vectors.
    MeanAxis { a: usize, axis: usize },
    /// out[j] = sum_i w[i] * x[i,j]
    WeightedSum { w: usize, x: usize },
    Row { a: usize, i: usize },
    Column { a: usize, j: usize },
}

struct Node<S: Real> {
    values: Vec<S>,
    shape: Vec<usize>,
    op: Op<S>,
    requires_grad: bool,
    /// persistent accumulated gradient; repeated backward calls add up.
    grad: Option<Vec<S>>,
    param: Option<Param<S>>,
}

/// Records one forward pass worth of operations.
pub struct Tape<S: Real> {
    inner: Rc<RefCell<Vec<Node<S>>>>,
}

impl<S: Real> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to one node on a tape. Cheap to clone.
pub struct Tensor<S: Real> {
    tape: Tape<S>,
    id: usize,
    shape: Vec<usize>,
}

impl<S: Real> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape)
            .finish()
    }
}

impl<S: Real> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            tape: self.tape.clone(),
            id: self.id,
            shape: self.shape.clone(),
        }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, values: Vec<S>, shape: Vec<usize>, op: Op<S>, requires_grad: bool) -> Tensor<S> {
        debug_assert_eq!(values.len(), numel(&shape));
        let mut nodes = self.inner.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            values,
            shape: shape.clone(),
            op,
            requires_grad,
            grad: None,
            param: None,
        });
        Tensor {
            tape: self.clone(),
            id,
            shape,
        }
    }

    /// A constant input; gradients do not flow into it.
    pub fn constant(&self, shape: &[usize], values: Vec<S>) -> Tensor<S> {
        assert_eq!(
            values.len(),
            numel(shape),
            "constant: {} values for shape {:?}",
            values.len(),
            shape
        );
        self.push(values, shape.to_vec(), Op::Leaf, false)
    }

    pub fn scalar(&self, v: S) -> Tensor<S> {
        self.constant(&[1], vec![v])
    }

    pub fn vector(&self, values: Vec<S>) -> Tensor<S> {
        let n = values.len();
        self.constant(&[n], values)
    }

    pub fn matrix(&self, rows: usize, cols: usize, values: Vec<S>) -> Tensor<S> {
        self.constant(&[rows, cols], values)
    }

    /// A trainable leaf backed by a persistent [`Param`]; backward flushes the
    /// accumulated gradient into the param's grad buffer.
    pub fn leaf(&self, param: &Param<S>) -> Tensor<S> {
        let shape = param.shape();
        let values = param.values();
        let t = self.push(values, shape, Op::Leaf, true);
        self.inner.borrow_mut()[t.id].param = Some(param.clone());
        t
    }
}

impl<S: Real> Tensor<S> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }

    pub fn values(&self) -> Vec<S> {
        self.tape.inner.borrow()[self.id].values.clone()
    }

    /// Scalar extraction; panics if not a single element.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on shape {:?}", self.shape);
        self.tape.inner.borrow()[self.id].values[0]
    }

    /// Accumulated gradient, if backward has reached this node.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.tape.inner.borrow()[self.id].grad.clone()
    }

    fn same_tape(&self, other: &Tensor<S>) -> Result<(), TensorError> {
        if Rc::ptr_eq(&self.tape.inner, &other.tape.inner) {
            Ok(())
        } else {
            Err(TensorError::TapeMismatch)
        }
    }

    fn unary(&self, op: &'static str, f: impl Fn(S) -> S, rec: impl FnOnce(usize) -> Op<S>) -> Tensor<S> {
        let _ = op;
        let nodes = self.tape.inner.borrow();
        let values: Vec<S> = nodes[self.id].values.iter().map(|&v| f(v)).collect();
        let requires = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape.push(values, self.shape.clone(), rec(self.id), requires)
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary("relu", |v| if v > S::zero() { v } else { S::zero() }, |a| Op::Relu { a })
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary("sigmoid", |v| S::one() / (S::one() + (-v).exp()), |a| Op::Sigmoid { a })
    }

    pub fn tanh(&self) -> Tensor<S> {
        self.unary("tanh", |v| v.tanh(), |a| Op::Tanh { a })
    }

    pub fn ln(&self) -> Tensor<S> {
        self.unary("ln", |v| v.ln(), |a| Op::Ln { a })
    }

    pub fn clamp(&self, lo: S, hi: S) -> Tensor<S> {
        self.unary(
            "clamp",
            |v| {
                if v < lo {
                    lo
                } else if v > hi {
                    hi
                } else {
                    v
                }
            },
            |a| Op::Clamp { a, lo, hi },
        )
    }

    pub fn scale(&self, c: S) -> Tensor<S> {
        self.unary("scale", |v| v * c, |a| Op::Scale { a, c })
    }

    pub fn neg(&self) -> Tensor<S> {
        self.scale(-S::one())
    }

    fn binary(
        &self,
        other: &Tensor<S>,
        op: &'static str,
        f: impl Fn(S, S) -> S,
        rec: impl FnOnce(usize, usize) -> Op<S>,
    ) -> Result<Tensor<S>, TensorError> {
        self.same_tape(other)?;
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let nodes = self.tape.inner.borrow();
        let values: Vec<S> = nodes[self.id]
            .values
            .iter()
            .zip(nodes[other.id].values.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let requires = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(values, self.shape.clone(), rec(self.id, other.id), requires))
    }

    /// Elementwise addition of equal shapes, or a bias vector broadcast over
    /// the last axis of a matrix.
    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        if self.shape == other.shape {
            return self.binary(other, "add", |a, b| a + b, |a, b| Op::Add { a, b });
        }
        if self.shape.len() == 2 && other.shape.len() == 1 && self.shape[1] == other.shape[0] {
            return self.add_bias_rows(other);
        }
        Err(TensorError::ShapeMismatch {
            op: "add",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        })
    }

    /// matrix [n,d] + bias [d], added to every row.
    pub fn add_bias_rows(&self, bias: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.same_tape(bias)?;
        if self.shape.len() != 2 || bias.shape.len() != 1 || self.shape[1] != bias.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias_rows",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let (n, d) = (self.shape[0], self.shape[1]);
        let nodes = self.tape.inner.borrow();
        let a = &nodes[self.id].values;
        let b = &nodes[bias.id].values;
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                values.push(a[i * d + j] + b[j]);
            }
        }
        let requires = nodes[self.id].requires_grad || nodes[bias.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(
            values,
            self.shape.clone(),
            Op::AddBiasRows { a: self.id, bias: bias.id },
            requires,
        ))
    }

    /// matrix [m,n] + bias [m], added to every column.
    pub fn add_bias_cols(&self, bias: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.same_tape(bias)?;
        if self.shape.len() != 2 || bias.shape.len() != 1 || self.shape[0] != bias.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias_cols",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let nodes = self.tape.inner.borrow();
        let a = &nodes[self.id].values;
        let b = &nodes[bias.id].values;
        let mut values = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                values.push(a[i * n + j] + b[i]);
            }
        }
        let requires = nodes[self.id].requires_grad || nodes[bias.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(
            values,
            self.shape.clone(),
            Op::AddBiasCols { a: self.id, bias: bias.id },
            requires,
        ))
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.binary(other, "sub", |a, b| a - b, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.binary(other, "mul", |a, b| a * b, |a, b| Op::Mul { a, b })
    }

    /// Matrix product [m,k] x [k,n] -> [m,n]; a 1-D right operand of length k
    /// is treated as a column, producing a vector of length m.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.same_tape(other)?;
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.shape.len() != 2 {
            return Err(mismatch());
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (n, out_shape) = match other.shape.len() {
            1 => {
                if other.shape[0] != k {
                    return Err(mismatch());
                }
                (1, vec![m])
            }
            2 => {
                if other.shape[0] != k {
                    return Err(mismatch());
                }
                (other.shape[1], vec![m, other.shape[1]])
            }
            _ => return Err(mismatch()),
        };
        let nodes = self.tape.inner.borrow();
        let a = &nodes[self.id].values;
        let b = &nodes[other.id].values;
        let mut values = vec![S::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == S::zero() {
                    continue;
                }
                for j in 0..n {
                    values[i * n + j] += aip * b[p * n + j];
                }
            }
        }
        let requires = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(
            values,
            out_shape,
            Op::MatMul { a: self.id, b: other.id },
            requires,
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<S>, TensorError> {
        if self.shape.len() != 2 {
            return Err(TensorError::BadShape {
                op: "transpose",
                shape: self.shape.clone(),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let nodes = self.tape.inner.borrow();
        let a = &nodes[self.id].values;
        let mut values = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                values[j * m + i] = a[i * n + j];
            }
        }
        let requires = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(values, vec![n, m], Op::Transpose { a: self.id }, requires))
    }

    /// Numerically stabilized softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor<S>, TensorError> {
        let (rows, cols) = match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => {
                return Err(TensorError::BadShape {
                    op: "softmax",
                    shape: self.shape.clone(),
                })
            }
        };
        if cols == 0 {
            return Err(TensorError::BadShape {
                op: "softmax",
                shape: self.shape.clone(),
            });
        }
        let nodes = self.tape.inner.borrow();
        let a = &nodes[self.id].values;
        let mut values = vec![S::zero(); rows * cols];
        for r in 0..rows {
            let row = &a[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(row[0], S::max);
            let mut denom = S::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                values[r * cols + j] = e;
                denom += e;
            }
            for j in 0..cols {
                values[r * cols + j] /= denom;
            }
        }
        let requires = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(values, self.shape.clone(), Op::Softmax { a: self.id }, requires))
    }

    /// Mean over one axis. For a vector the result has shape [1]; for a
    /// matrix, axis 0 averages rows into a [d] vector and axis 1 averages
    /// each row into an [n] vector.
    pub fn reduce_mean(&self, axis: usize) -> Result<Tensor<S>, TensorError> {
        let nodes = self.tape.inner.borrow();
        let a = &nodes[self.id].values;
        let (values, out_shape) = match (self.shape.len(), axis) {
            (1, 0) => {
                let n = self.shape[0];
                if n == 0 {
                    return Err(TensorError::BadShape {
                        op: "reduce_mean",
                        shape: self.shape.clone(),
                    });
                }
                let sum: S = a.iter().cloned().sum();
                (vec![sum / S::of(n as f64)], vec![1])
            }
            (2, 0) => {
                let (n, d) = (self.shape[0], self.shape[1]);
                let mut out = vec![S::zero(); d];
                for i in 0..n {
                    for j in 0..d {
                        out[j] += a[i * d + j];
                    }
                }
                let inv = S::one() / S::of(n as f64);
                for v in &mut out {
                    *v *= inv;
                }
                (out, vec![d])
            }
            (2, 1) => {
                let (n, d) = (self.shape[0], self.shape[1]);
                let mut out = vec![S::zero(); n];
                for i in 0..n {
                    let mut s = S::zero();
                    for j in 0..d {
                        s += a[i * d + j];
                    }
                    out[i] = s / S::of(d as f64);
                }
                (out, vec![n])
            }
            _ => {
                return Err(TensorError::BadShape {
                    op: "reduce_mean",
                    shape: self.shape.clone(),
                })
            }
        };
        let requires = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(
            values,
            out_shape,
            Op::MeanAxis { a: self.id, axis },
            requires,
        ))
    }

    pub fn row(&self, i: usize) -> Result<Tensor<S>, TensorError> {
        if self.shape.len() != 2 {
            return Err(TensorError::BadShape {
                op: "row",
                shape: self.shape.clone(),
            });
        }
        let (n, d) = (self.shape[0], self.shape[1]);
        if i >= n {
            return Err(TensorError::IndexOutOfBounds { index: i, len: n });
        }
        let nodes = self.tape.inner.borrow();
        let values = nodes[self.id].values[i * d..(i + 1) * d].to_vec();
        let requires = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(values, vec![d], Op::Row { a: self.id, i }, requires))
    }

    pub fn column(&self, j: usize) -> Result<Tensor<S>, TensorError> {
        if self.shape.len() != 2 {
            return Err(TensorError::BadShape {
                op: "column",
                shape: self.shape.clone(),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        if j >= n {
            return Err(TensorError::IndexOutOfBounds { index: j, len: n });
        }
        let nodes = self.tape.inner.borrow();
        let values: Vec<S> = (0..m).map(|i| nodes[self.id].values[i * n + j]).collect();
        let requires = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(values, vec![m], Op::Column { a: self.id, j }, requires))
    }

    /// Reverse pass from a scalar loss. Gradients accumulate (sum) into every
    /// `requires_grad` ancestor; a second call without zeroing doubles them.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: self.shape.clone(),
            });
        }
        let mut nodes = self.tape.inner.borrow_mut();
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.id + 1];
        grads[self.id] = Some(vec![S::one()]);

        for id in (0..=self.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            propagate(&nodes, id, &g, &mut grads);
            // persist
            let node = &mut nodes[id];
            match &mut node.grad {
                Some(acc) => {
                    for (a, &gi) in acc.iter_mut().zip(g.iter()) {
                        *a += gi;
                    }
                }
                None => node.grad = Some(g.clone()),
            }
            if let Some(param) = &node.param {
                param.accumulate_grad(&g);
            }
        }
        Ok(())
    }
}

/// Scatter the output gradient `g` of node `id` into its parents.
fn propagate<S: Real>(nodes: &[Node<S>], id: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
    let add_to = |grads: &mut [Option<Vec<S>>], pid: usize, contrib: &dyn Fn(&mut [S])| {
        if !nodes[pid].requires_grad {
            return;
        }
        let buf = grads[pid].get_or_insert_with(|| vec![S::zero(); nodes[pid].values.len()]);
        contrib(buf);
    };

    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add { a, b } => {
            add_to(grads, *a, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x += gi;
                }
            });
            add_to(grads, *b, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x += gi;
                }
            });
        }
        Op::AddBiasRows { a, bias } => {
            let (n, d) = (nodes[*a].shape[0], nodes[*a].shape[1]);
            add_to(grads, *a, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x += gi;
                }
            });
            add_to(grads, *bias, &|buf| {
                for i in 0..n {
                    for j in 0..d {
                        buf[j] += g[i * d + j];
                    }
                }
            });
        }
        Op::AddBiasCols { a, bias } => {
            let (m, n) = (nodes[*a].shape[0], nodes[*a].shape[1]);
            add_to(grads, *a, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x += gi;
                }
            });
            add_to(grads, *bias, &|buf| {
                for i in 0..m {
                    for j in 0..n {
                        buf[i] += g[i * n + j];
                    }
                }
            });
        }
        Op::Sub { a, b } => {
            add_to(grads, *a, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x += gi;
                }
            });
            add_to(grads, *b, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x -= gi;
                }
            });
        }
        Op::Mul { a, b } => {
            let av = &nodes[*a].values;
            let bv = &nodes[*b].values;
            add_to(grads, *a, &|buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] * bv[i];
                }
            });
            add_to(grads, *b, &|buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] * av[i];
                }
            });
        }
        Op::Scale { a, c } => {
            add_to(grads, *a, &|buf| {
                for (x, &gi) in buf.iter_mut().zip(g) {
                    *x += gi * *c;
                }
            });
        }
        Op::Relu { a } => {
            let av = &nodes[*a].values;
            add_to(grads, *a, &|buf| {
                for i in 0..buf.len() {
                    // gradient at exactly 0 is 0
                    if av[i] > S::zero() {
                        buf[i] += g[i];
                    }
                }
            });
        }
        Op::Sigmoid { a } => {
            let yv = &nodes[id].values;
            add_to(grads, *a, &|buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] * yv[i] * (S::one() - yv[i]);
                }
            });
        }
        Op::Tanh { a } => {
            let yv = &nodes[id].values;
            add_to(grads, *a, &|buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] * (S::one() - yv[i] * yv[i]);
                }
            });
        }
        Op::Ln { a } => {
            let av = &nodes[*a].values;
            add_to(grads, *a, &|buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] / av[i];
                }
            });
        }
        Op::Clamp { a, lo, hi } => {
            let av = &nodes[*a].values;
            add_to(grads, *a, &|buf| {
                for i in 0..buf.len() {
                    if av[i] > *lo && av[i] < *hi {
                        buf[i] += g[i];
                    }
                }
            });
        }
        Op::Softmax { a } => {
            let yv = &nodes[id].values;
            let shape = &nodes[id].shape;
            let (rows, cols) = match shape.len() {
                1 => (1, shape[0]),
                _ => (shape[0], shape[1]),
            };
            add_to(grads, *a, &|buf| {
                for r in 0..rows {
                    let y = &yv[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let mut dot = S::zero();
                    for j in 0..cols {
                        dot += gr[j] * y[j];
                    }
                    for j in 0..cols {
                        buf[r * cols + j] += y[j] * (gr[j] - dot);
                    }
                }
            });
        }
        Op::MatMul { a, b } => {
            let (m, k) = (nodes[*a].shape[0], nodes[*a].shape[1]);
            let n = if nodes[*b].shape.len() == 1 {
                1
            } else {
                nodes[*b].shape[1]
            };
            let av = &nodes[*a].values;
            let bv = &nodes[*b].values;
            // dA = g . B^T
            add_to(grads, *a, &|buf| {
                for i in 0..m {
                    for p in 0..k {
                        let mut s = S::zero();
                        for j in 0..n {
                            s += g[i * n + j] * bv[p * n + j];
                        }
                        buf[i * k + p] += s;
                    }
                }
            });
            // dB = A^T . g
            add_to(grads, *b, &|buf| {
                for p in 0..k {
                    for j in 0..n {
                        let mut s = S::zero();
                        for i in 0..m {
                            s += av[i * k + p] * g[i * n + j];
                        }
                        buf[p * n + j] += s;
                    }
                }
            });
        }
        Op::Transpose { a } => {
            let (m, n) = (nodes[*a].shape[0], nodes[*a].shape[1]);
            add_to(grads, *a, &|buf| {
                for i in 0..m {
                    for j in 0..n {
                        buf[i * n + j] += g[j * m + i];
                    }
                }
            });
        }
        Op::Concat { parts } => {
            let mut offset = 0;
            for &pid in parts {
                let len = nodes[pid].values.len();
                let off = offset;
                add_to(grads, pid, &|buf| {
                    for i in 0..len {
                        buf[i] += g[off + i];
                    }
                });
                offset += len;
            }
        }
        Op::StackRows { parts } => {
            let d = nodes[parts[0]].values.len();
            for (r, &pid) in parts.iter().enumerate() {
                add_to(grads, pid, &|buf| {
                    for i in 0..d {
                        buf[i] += g[r * d + i];
                    }
                });
            }
        }
        Op::MeanAxis { a, axis } => {
            let shape = &nodes[*a].shape;
            match (shape.len(), axis) {
                (1, _) => {
                    let n = shape[0];
                    let inv = S::one() / S::of(n as f64);
                    add_to(grads, *a, &|buf| {
                        for x in buf.iter_mut() {
                            *x += g[0] * inv;
                        }
                    });
                }
                (2, 0) => {
                    let (n, d) = (shape[0], shape[1]);
                    let inv = S::one() / S::of(n as f64);
                    add_to(grads, *a, &|buf| {
                        for i in 0..n {
                            for j in 0..d {
                                buf[i * d + j] += g[j] * inv;
                            }
                        }
                    });
                }
                _ => {
                    let (n, d) = (shape[0], shape[1]);
                    let inv = S::one() / S::of(d as f64);
                    add_to(grads, *a, &|buf| {
                        for i in 0..n {
                            for j in 0..d {
                                buf[i * d + j] += g[i] * inv;
                            }
                        }
                    });
                }
            }
        }
        Op::WeightedSum { w, x } => {
            let n = nodes[*w].shape[0];
            let d = nodes[*x].shape[1];
            let wv = &nodes[*w].values;
            let xv = &nodes[*x].values;
            add_to(grads, *w, &|buf| {
                for i in 0..n {
                    let mut s = S::zero();
                    for j in 0..d {
                        s += g[j] * xv[i * d + j];
                    }
                    buf[i] += s;
                }
            });
            add_to(grads, *x, &|buf| {
                for i in 0..n {
                    for j in 0..d {
                        buf[i * d + j] += wv[i] * g[j];
                    }
                }
            });
        }
        Op::Row { a, i } => {
            let d = nodes[*a].shape[1];
            add_to(grads, *a, &|buf| {
                for j in 0..d {
                    buf[i * d + j] += g[j];
                }
            });
        }
        Op::Column { a, j } => {
            let (m, n) = (nodes[*a].shape[0], nodes[*a].shape[1]);
            add_to(grads, *a, &|buf| {
                for i in 0..m {
                    buf[i * n + j] += g[i];
                }
            });
            let _ = m;
        }
    }
}

/// 1-D concatenation of vectors (and scalars treated as length-1 vectors).
pub fn concat<S: Real>(parts: &[Tensor<S>]) -> Result<Tensor<S>, TensorError> {
    let first = parts.first().ok_or(TensorError::EmptyOperands { op: "concat" })?;
    let tape = first.tape.clone();
    let mut values = Vec::new();
    let mut requires = false;
    let mut ids = Vec::with_capacity(parts.len());
    {
        let nodes = tape.inner.borrow();
        for p in parts {
            first.same_tape(p)?;
            if p.shape.len() != 1 {
                return Err(TensorError::BadShape {
                    op: "concat",
                    shape: p.shape.clone(),
                });
            }
            values.extend_from_slice(&nodes[p.id].values);
            requires |= nodes[p.id].requires_grad;
            ids.push(p.id);
        }
    }
    let n = values.len();
    Ok(tape.push(values, vec![n], Op::Concat { parts: ids }, requires))
}

/// Stack k equal-length vectors into a [k,d] matrix.
pub fn stack_rows<S: Real>(parts: &[Tensor<S>]) -> Result<Tensor<S>, TensorError> {
    let first = parts
        .first()
        .ok_or(TensorError::EmptyOperands { op: "stack_rows" })?;
    if first.shape.len() != 1 {
        return Err(TensorError::BadShape {
            op: "stack_rows",
            shape: first.shape.clone(),
        });
    }
    let d = first.shape[0];
    let tape = first.tape.clone();
    let mut values = Vec::with_capacity(parts.len() * d);
    let mut requires = false;
    let mut ids = Vec::with_capacity(parts.len());
    {
        let nodes = tape.inner.borrow();
        for p in parts {
            first.same_tape(p)?;
            if p.shape != [d] {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            values.extend_from_slice(&nodes[p.id].values);
            requires |= nodes[p.id].requires_grad;
            ids.push(p.id);
        }
    }
    let k = parts.len();
    Ok(tape.push(values, vec![k, d], Op::StackRows { parts: ids }, requires))
}

/// weighted_sum(w, X) = sum_i w[i] * X[i,:]
pub fn weighted_sum<S: Real>(w: &Tensor<S>, x: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
    w.same_tape(x)?;
    if w.shape.len() != 1 || x.shape.len() != 2 || w.shape[0] != x.shape[0] {
        return Err(TensorError::ShapeMismatch {
            op: "weighted_sum",
            lhs: w.shape.clone(),
            rhs: x.shape.clone(),
        });
    }
    let (n, d) = (x.shape[0], x.shape[1]);
    let tape = w.tape.clone();
    let nodes = tape.inner.borrow();
    let wv = &nodes[w.id].values;
    let xv = &nodes[x.id].values;
    let mut values = vec![S::zero(); d];
    for i in 0..n {
        for j in 0..d {
            values[j] += wv[i] * xv[i * d + j];
        }
    }
    let requires = nodes[w.id].requires_grad || nodes[x.id].requires_grad;
    drop(nodes);
    Ok(tape.push(values, vec![d], Op::WeightedSum { w: w.id, x: x.id }, requires))
}
