//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation in execution order, so the tape is
//! already a topological order and [`Graph::backward`] walks it once in
//! reverse. Nodes created with [`Graph::constant`] (and everything computed
//! only from constants) carry no gradient and are skipped during the backward
//! sweep.
//!
//! ```
//! use fwqa::graph::Graph;
//! use fwqa::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::scalar(2.0));
//! let y = g.leaf(Tensor::scalar(3.0));
//! let z = g.mul(x, y).unwrap();
//! let grads = g.backward(z).unwrap();
//! assert_eq!(grads.get(x).item(), 3.0);
//! assert_eq!(grads.get(y).item(), 2.0);
//! ```
//!
//! A graph is single-owner; share parameters between workers by building one
//! graph per worker from the same read-only [`Tensor`]s.

use crate::error::{Error, Result};
use crate::tensor::{kernels, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    StackRows(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    Sum(Var),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Pointwise and structural operations addressable by kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Mul,
    Tanh,
    Relu,
    Sigmoid,
    Scale(f64),
    Concat,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Whether each ReLU input on the tape is positive, in tape order. Two
    /// evaluations with equal patterns lie on the same linear piece of every
    /// ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.value(a).data().iter().map(|&x| x > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, inputs: &[Var], value: Tensor) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(op, value, rg)
    }

    fn rank_check(&self, op: &'static str, v: Var, rank: usize) -> Result<()> {
        if self.value(v).rank() != rank {
            return Err(Error::Shape {
                op,
                left: self.shape(v).to_vec(),
                right: vec![],
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(Op::MatMul(a, b), &[a, b], out))
    }

    /// `a · bᵀ` for `a: n×k`, `b: m×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols() {
            return Err(Error::shape("matmul_t", av.shape(), bv.shape()));
        }
        let (n, k, m) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; n * m];
        kernels::matmul_t(av.data(), bv.data(), &mut out, n, k, m);
        let out = Tensor::matrix(n, m, out)?;
        Ok(self.push_op(Op::MatMulT(a, b), &[a, b], out))
    }

    /// Matrix-vector product `m · v`.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = self.value(m).matvec(self.value(v))?;
        Ok(self.push_op(Op::MatVec(m, v), &[m, v], out))
    }

    /// `mᵀ · v`: the `v`-weighted sum of the rows of `m`.
    pub fn vecmat(&mut self, v: Var, m: Var) -> Result<Var> {
        let (vv, mv) = (self.value(v), self.value(m));
        if vv.rank() != 1 || mv.rank() != 2 || mv.rows() != vv.len() {
            return Err(Error::shape("vecmat", vv.shape(), mv.shape()));
        }
        let mut out = vec![0.0; mv.cols()];
        kernels::vecmat(vv.data(), mv.data(), &mut out, mv.rows(), mv.cols());
        Ok(self.push_op(Op::VecMat(v, m), &[v, m], Tensor::vector(&out)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push_op(Op::Add(a, b), &[a, b], out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push_op(Op::Sub(a, b), &[a, b], out))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push_op(Op::Mul(a, b), &[a, b], out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        self.push_op(Op::Scale(a, c), &[a], out)
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mv, vv) = (self.value(m), self.value(v));
        if mv.rank() != 2 || vv.rank() != 1 || mv.cols() != vv.len() {
            return Err(Error::shape("add_row", mv.shape(), vv.shape()));
        }
        let mut out = mv.clone();
        let cols = vv.len();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, &x) in row.iter_mut().zip(vv.data()) {
                *o += x;
            }
        }
        Ok(self.push_op(Op::AddRow(m, v), &[m, v], out))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push_op(Op::Tanh(a), &[a], out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push_op(Op::Relu(a), &[a], out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push_op(Op::Sigmoid(a), &[a], out)
    }

    /// Concatenates 1-D tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::arg("concat of nothing"));
        }
        let mut data = Vec::new();
        for &p in parts {
            self.rank_check("concat", p, 1)?;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::vector(&data);
        Ok(self.push_op(Op::Concat(parts.to_vec()), parts, out))
    }

    /// Elements `start..start + len` of a 1-D tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.rank_check("slice", a, 1)?;
        let v = self.value(a);
        if len == 0 || start + len > v.len() {
            return Err(Error::shape("slice", v.shape(), &[start, len]));
        }
        let out = Tensor::vector(&v.data()[start..start + len]);
        Ok(self.push_op(Op::Slice(a, start), &[a], out))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        self.rank_check("row", m, 2)?;
        let mv = self.value(m);
        if i >= mv.rows() {
            return Err(Error::shape("row", mv.shape(), &[i]));
        }
        let out = Tensor::vector(mv.row(i));
        Ok(self.push_op(Op::Row(m, i), &[m], out))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::arg("stack of nothing"));
        }
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            self.rank_check("stack_rows", r, 1)?;
            let v = self.value(r);
            if v.len() != width {
                return Err(Error::shape("stack_rows", &[width], v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::matrix(rows.len(), width, data)?;
        Ok(self.push_op(Op::StackRows(rows.to_vec()), rows, out))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.rank_check("softmax", a, 1)?;
        let out = Tensor::vector(&crate::tensor::softmax(self.value(a).data())?);
        Ok(self.push_op(Op::Softmax(a), &[a], out))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.rank_check("log_softmax", a, 1)?;
        let x = self.value(a).data();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = Tensor::vector(&x.iter().map(|v| v - lse).collect::<Vec<_>>());
        Ok(self.push_op(Op::LogSoftmax(a), &[a], out))
    }

    /// Element `i` of a 1-D tensor as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        self.rank_check("pick", a, 1)?;
        let v = self.value(a);
        if i >= v.len() {
            return Err(Error::arg(format!(
                "pick index {i} out of range {}",
                v.len()
            )));
        }
        let out = Tensor::scalar(v.data()[i]);
        Ok(self.push_op(Op::Pick(a, i), &[a], out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push_op(Op::Sum(a), &[a], out)
    }

    /// Dispatches one of the [`Elementwise`] kinds over `operands`.
    pub fn elementwise(&mut self, kind: Elementwise, operands: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if operands.len() != n {
                return Err(Error::arg(format!(
                    "{kind:?} takes {n} operand(s), got {}",
                    operands.len()
                )));
            }
            Ok(())
        };
        match kind {
            Elementwise::Add => {
                arity(2)?;
                self.add(operands[0], operands[1])
            }
            Elementwise::Mul => {
                arity(2)?;
                self.mul(operands[0], operands[1])
            }
            Elementwise::Tanh => {
                arity(1)?;
                Ok(self.tanh(operands[0]))
            }
            Elementwise::Relu => {
                arity(1)?;
                Ok(self.relu(operands[0]))
            }
            Elementwise::Sigmoid => {
                arity(1)?;
                Ok(self.sigmoid(operands[0]))
            }
            Elementwise::Scale(c) => {
                arity(1)?;
                Ok(self.scale(operands[0], c))
            }
            Elementwise::Concat => self.concat(operands),
        }
    }

    /// Reverse sweep from a single-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::arg(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }

        let shapes = self.nodes[..=root.0]
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(ga) = self.slot(*a, grads) {
                    // dA = dC · Bᵀ
                    kernels::matmul_t(dy, bv.data(), ga, m, n, k);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    // dB = Aᵀ · dC
                    kernels::matmul_tn(av.data(), dy, gb, m, k, n);
                }
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.rows());
                if let Some(ga) = self.slot(*a, grads) {
                    kernels::matmul(dy, bv.data(), ga, n, m, k);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    kernels::matmul_tn(dy, av.data(), gb, n, m, k);
                }
            }
            Op::MatVec(m, v) => {
                let (mv, vv) = (self.value(*m), self.value(*v));
                if let Some(gm) = self.slot(*m, grads) {
                    kernels::outer(dy, vv.data(), gm);
                }
                if let Some(gv) = self.slot(*v, grads) {
                    kernels::vecmat(dy, mv.data(), gv, mv.rows(), mv.cols());
                }
            }
            Op::VecMat(v, m) => {
                let (vv, mv) = (self.value(*v), self.value(*m));
                if let Some(gv) = self.slot(*v, grads) {
                    kernels::matvec(mv.data(), dy, gv, mv.rows(), mv.cols());
                }
                if let Some(gm) = self.slot(*m, grads) {
                    kernels::outer(vv.data(), dy, gm);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, grads, |g| axpy(g, dy, 1.0));
                self.accumulate(*b, grads, |g| axpy(g, dy, 1.0));
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, grads, |g| axpy(g, dy, 1.0));
                self.accumulate(*b, grads, |g| axpy(g, dy, -1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(*a, grads, |g| {
                    for ((gi, d), x) in g.iter_mut().zip(dy).zip(bv) {
                        *gi += d * x;
                    }
                });
                self.accumulate(*b, grads, |g| {
                    for ((gi, d), x) in g.iter_mut().zip(dy).zip(av) {
                        *gi += d * x;
                    }
                });
            }
            Op::Scale(a, c) => self.accumulate(*a, grads, |g| axpy(g, dy, *c)),
            Op::AddRow(m, v) => {
                self.accumulate(*m, grads, |g| axpy(g, dy, 1.0));
                let cols = self.value(*v).len();
                self.accumulate(*v, grads, |g| {
                    for row in dy.chunks(cols) {
                        axpy(g, row, 1.0);
                    }
                });
            }
            Op::Tanh(a) => self.accumulate(*a, grads, |g| {
                for ((gi, d), yi) in g.iter_mut().zip(dy).zip(y) {
                    *gi += d * (1.0 - yi * yi);
                }
            }),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(*a, grads, |g| {
                    for ((gi, d), xi) in g.iter_mut().zip(dy).zip(x) {
                        if *xi > 0.0 {
                            *gi += d;
                        }
                    }
                })
            }
            Op::Sigmoid(a) => self.accumulate(*a, grads, |g| {
                for ((gi, d), yi) in g.iter_mut().zip(dy).zip(y) {
                    *gi += d * yi * (1.0 - yi);
                }
            }),
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    let piece = &dy[offset..offset + n];
                    self.accumulate(*p, grads, |g| axpy(g, piece, 1.0));
                    offset += n;
                }
            }
            Op::Slice(a, start) => {
                let start = *start;
                self.accumulate(*a, grads, |g| {
                    axpy(&mut g[start..start + dy.len()], dy, 1.0)
                })
            }
            Op::Row(m, i) => {
                let cols = dy.len();
                let i = *i;
                self.accumulate(*m, grads, |g| {
                    axpy(&mut g[i * cols..(i + 1) * cols], dy, 1.0)
                })
            }
            Op::StackRows(rows) => {
                for (r, chunk) in rows.iter().zip(dy.chunks(dy.len() / rows.len())) {
                    self.accumulate(*r, grads, |g| axpy(g, chunk, 1.0));
                }
            }
            Op::Softmax(a) => {
                let inner = kernels::dot(dy, y);
                self.accumulate(*a, grads, |g| {
                    for ((gi, d), yi) in g.iter_mut().zip(dy).zip(y) {
                        *gi += yi * (d - inner);
                    }
                })
            }
            Op::LogSoftmax(a) => {
                let total: f64 = dy.iter().sum();
                self.accumulate(*a, grads, |g| {
                    for ((gi, d), yi) in g.iter_mut().zip(dy).zip(y) {
                        *gi += d - yi.exp() * total;
                    }
                })
            }
            Op::Pick(a, i) => {
                let i = *i;
                self.accumulate(*a, grads, |g| g[i] += dy[0])
            }
            Op::Sum(a) => self.accumulate(*a, grads, |g| {
                for gi in g.iter_mut() {
                    *gi += dy[0];
                }
            }),
        }
    }

    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Vec<f64>>]) -> Option<&'g mut [f64]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(
            grads[v.0]
                .get_or_insert_with(|| vec![0.0; n])
                .as_mut_slice(),
        )
    }

    fn accumulate(&self, v: Var, grads: &mut [Option<Vec<f64>>], f: impl FnOnce(&mut [f64])) {
        if let Some(g) = self.slot(v, grads) {
            f(g);
        }
    }
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros when `v` does not
    /// influence the root.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Borrowed gradient data, `None` when the node was not reached.
    pub fn raw(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(Option::as_deref)
    }
}
