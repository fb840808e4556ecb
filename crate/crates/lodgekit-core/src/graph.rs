//! Reverse-mode autodiff over a flat tape.
//!
//! Each forward op appends a node holding its value; [`Graph::backward`]
//! walks the tape in reverse and accumulates vector-Jacobian products into
//! per-node gradient slots. Ops cover exactly what the denoisers, the
//! kinematics-based losses, and the discriminator need: elementwise math,
//! matmul variants, batched 3x3 products, broadcasting, slicing/concat,
//! softmax, layer norm, and a few activations.
//!
//! Shape disagreements are programming errors and panic with context.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::F64Ext;
use crate::tensor::{matmul, matmul_ta, matmul_tb, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    PowConst(Var, f64),
    Matmul(Var, Var),
    MatmulTa(Var, Var),
    MatmulTb(Var, Var),
    Bmm(Var, Var),
    AddRowBcast(Var, Var),
    MulRowBcast(Var, Var),
    MulColBcast(Var, Var),
    BroadcastRows(Var),
    MeanPoolRows(Var, usize),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Softmax(Var),
    LayerNorm(Var, Var, Var),
    Gelu(Var),
    Sigmoid(Var),
    Log(Var),
    NegPart(Var),
    Clamp01(Var),
    SumAll(Var),
    MeanAll(Var),
    SumLastKeep(Var),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf. Gradients are only tracked through subgraphs rooted
    /// at leaves with `needs_grad`.
    pub fn leaf(&mut self, value: Tensor, needs_grad: bool) -> Var {
        self.push(Op::Leaf, value, needs_grad)
    }

    /// Leaf that does not require gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar_value on tensor of shape {:?}", t.shape());
        t.data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn flows(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    // ----- elementwise -----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, "add", |x, y| x + y);
        self.push(Op::Add(a, b), value, self.flows(a) || self.flows(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, "sub", |x, y| x - y);
        self.push(Op::Sub(a, b), value, self.flows(a) || self.flows(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, "mul", |x, y| x * y);
        self.push(Op::Mul(a, b), value, self.flows(a) || self.flows(b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.map(a, |x| x * s);
        self.push(Op::Scale(a, s), value, self.flows(a))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let value = self.map(a, |x| x + c);
        self.push(Op::AddConst(a), value, self.flows(a))
    }

    pub fn pow_const(&mut self, a: Var, p: f64) -> Var {
        let value = self.map(a, |x| x.powf(p));
        self.push(Op::PowConst(a, p), value, self.flows(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| x * 0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2)));
        self.push(Op::Gelu(a), value, self.flows(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.map(a, crate::math::sigmoid);
        self.push(Op::Sigmoid(a), value, self.flows(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| x.ln());
        self.push(Op::Log(a), value, self.flows(a))
    }

    /// min(x, 0): keeps only the negative part.
    pub fn neg_part(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| x.min(0.0));
        self.push(Op::NegPart(a), value, self.flows(a))
    }

    /// Clamp into [0, 1] with unit gradient strictly inside.
    pub fn clamp01(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| x.clamp(0.0, 1.0));
        self.push(Op::Clamp01(a), value, self.flows(a))
    }

    // ----- matrix products --------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        self.push(Op::Matmul(a, b), value, self.flows(a) || self.flows(b))
    }

    /// A^T @ B with A of shape (k, m).
    pub fn matmul_ta(&mut self, a: Var, b: Var) -> Var {
        let value = matmul_ta(self.value(a), self.value(b));
        self.push(Op::MatmulTa(a, b), value, self.flows(a) || self.flows(b))
    }

    /// A @ B^T with B of shape (n, k).
    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Var {
        let value = matmul_tb(self.value(a), self.value(b));
        self.push(Op::MatmulTb(a, b), value, self.flows(a) || self.flows(b))
    }

    /// Batched matmul over stacks: (B, m, k) @ (B, k, n) -> (B, m, n).
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let value = bmm_value(self.value(a), self.value(b));
        self.push(Op::Bmm(a, b), value, self.flows(a) || self.flows(b))
    }

    // ----- broadcasting -----------------------------------------------------

    /// (R, C) + (C,) with the vector broadcast over rows.
    pub fn add_row_bcast(&mut self, a: Var, bias: Var) -> Var {
        let (x, w) = (self.value(a), self.value(bias));
        assert_eq!(x.shape().len(), 2, "add_row_bcast lhs must be 2d");
        assert_eq!(w.shape(), &[x.cols()], "bias shape {:?} vs {:?}", w.shape(), x.shape());
        let cols = x.cols();
        let mut data = x.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += w.data()[i % cols];
        }
        let value = Tensor::new(x.shape(), data);
        self.push(Op::AddRowBcast(a, bias), value, self.flows(a) || self.flows(bias))
    }

    /// (R, C) * (C,) with the vector broadcast over rows.
    pub fn mul_row_bcast(&mut self, a: Var, w: Var) -> Var {
        let (x, ww) = (self.value(a), self.value(w));
        assert_eq!(x.shape().len(), 2, "mul_row_bcast lhs must be 2d");
        assert_eq!(ww.shape(), &[x.cols()], "weight shape {:?} vs {:?}", ww.shape(), x.shape());
        let cols = x.cols();
        let mut data = x.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v *= ww.data()[i % cols];
        }
        let value = Tensor::new(x.shape(), data);
        self.push(Op::MulRowBcast(a, w), value, self.flows(a) || self.flows(w))
    }

    /// (R, C) * (R, 1) with the column broadcast over columns.
    pub fn mul_col_bcast(&mut self, a: Var, s: Var) -> Var {
        let (x, sv) = (self.value(a), self.value(s));
        assert_eq!(x.shape().len(), 2, "mul_col_bcast lhs must be 2d");
        assert_eq!(sv.shape(), &[x.rows(), 1], "scaler shape {:?} vs {:?}", sv.shape(), x.shape());
        let cols = x.cols();
        let mut data = x.data().to_vec();
        for r in 0..x.rows() {
            let f = sv.data()[r];
            for v in &mut data[r * cols..(r + 1) * cols] {
                *v *= f;
            }
        }
        let value = Tensor::new(x.shape(), data);
        self.push(Op::MulColBcast(a, s), value, self.flows(a) || self.flows(s))
    }

    /// Repeat a (1, C) row tensor into (rows, C).
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape().len(), 2);
        assert_eq!(x.rows(), 1, "broadcast_rows input must have one row");
        let mut data = Vec::with_capacity(rows * x.cols());
        for _ in 0..rows {
            data.extend_from_slice(x.data());
        }
        let value = Tensor::new(&[rows, x.cols()], data);
        self.push(Op::BroadcastRows(a), value, self.flows(a))
    }

    /// Mean-pool groups of `factor` consecutive rows: (R, C) -> (R/f, C).
    pub fn mean_pool_rows(&mut self, a: Var, factor: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape().len(), 2);
        assert!(
            factor > 0 && x.rows() % factor == 0,
            "rows {} not divisible by {factor}",
            x.rows()
        );
        let out_rows = x.rows() / factor;
        let cols = x.cols();
        let mut data = vec![0.0; out_rows * cols];
        for r in 0..x.rows() {
            let o = r / factor;
            for c in 0..cols {
                data[o * cols + c] += x.at2(r, c) / factor as f64;
            }
        }
        let value = Tensor::new(&[out_rows, cols], data);
        self.push(Op::MeanPoolRows(a, factor), value, self.flows(a))
    }

    // ----- shape surgery ----------------------------------------------------

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape().len(), 2);
        assert!(start + len <= x.cols(), "column slice out of range");
        let cols = x.cols();
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(&[x.rows(), len], data);
        self.push(Op::SliceCols(a, start, len), value, self.flows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let t = self.value(*p);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                let c = t.cols();
                data.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
            }
        }
        let needs = parts.iter().any(|p| self.flows(*p));
        let value = Tensor::new(&[rows, total], data);
        self.push(Op::ConcatCols(parts.to_vec()), value, needs)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape().len(), 2);
        assert!(start + len <= x.rows(), "row slice out of range");
        let cols = x.cols();
        let data = x.data()[start * cols..(start + len) * cols].to_vec();
        let value = Tensor::new(&[len, cols], data);
        self.push(Op::SliceRows(a, start, len), value, self.flows(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let needs = parts.iter().any(|p| self.flows(*p));
        let value = Tensor::new(&[rows, cols], data);
        self.push(Op::ConcatRows(parts.to_vec()), value, needs)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).clone().reshaped(shape);
        self.push(Op::Reshape(a), value, self.flows(a))
    }

    // ----- normalization and reductions --------------------------------------

    /// Row-wise softmax over the last dimension of a 2-D tensor.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape().len(), 2, "softmax expects 2d");
        let (r, c) = (x.rows(), x.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = x.row(i);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                data[i * c + j] = e;
                z += e;
            }
            for j in 0..c {
                data[i * c + j] /= z;
            }
        }
        let value = Tensor::new(&[r, c], data);
        self.push(Op::Softmax(a), value, self.flows(a))
    }

    /// Layer norm over the last dimension with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xs = self.value(x);
        assert_eq!(xs.shape().len(), 2, "layer_norm expects 2d");
        let (r, c) = (xs.rows(), xs.cols());
        assert_eq!(self.value(gamma).shape(), &[c]);
        assert_eq!(self.value(beta).shape(), &[c]);
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = xs.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..c {
                data[i * c + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let value = Tensor::new(&[r, c], data);
        let needs = self.flows(x) || self.flows(gamma) || self.flows(beta);
        self.push(Op::LayerNorm(x, gamma, beta), value, needs)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::SumAll(a), value, self.flows(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64);
        self.push(Op::MeanAll(a), value, self.flows(a))
    }

    /// Row sums kept as a column: (R, C) -> (R, 1).
    pub fn sum_last_keep(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape().len(), 2);
        let data: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let value = Tensor::new(&[x.rows(), 1], data);
        self.push(Op::SumLastKeep(a), value, self.flows(a))
    }

    // ----- composite helpers --------------------------------------------------

    /// Mean of elementwise squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor::new(x.shape(), x.data().iter().map(|&v| f(v)).collect())
    }

    fn zip(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "{what}: shape mismatch");
        Tensor::new(
            x.shape(),
            x.data().iter().zip(y.data()).map(|(&u, &v)| f(u, v)).collect(),
        )
    }

    // ----- backward -----------------------------------------------------------

    /// Reverse pass from a scalar loss. Returns one gradient slot per node;
    /// only nodes on a `needs_grad` path are populated.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.accumulate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.flows(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_scaled(&delta, 1.0),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                self.acc(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let da = elementwise(g, self.value(*b), |x, y| x * y);
                let db = elementwise(g, self.value(*a), |x, y| x * y);
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::Scale(a, s) => {
                let mut d = g.clone();
                d.scale_in_place(*s);
                self.acc(grads, *a, d);
            }
            Op::AddConst(a) => self.acc(grads, *a, g.clone()),
            Op::PowConst(a, p) => {
                let x = self.value(*a);
                let d = Tensor::new(
                    x.shape(),
                    x.data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| gv * p * xv.powf(p - 1.0))
                        .collect(),
                );
                self.acc(grads, *a, d);
            }
            Op::Matmul(a, b) => {
                self.acc(grads, *a, matmul_tb(g, self.value(*b)));
                self.acc(grads, *b, matmul_ta(self.value(*a), g));
            }
            Op::MatmulTa(a, b) => {
                self.acc(grads, *a, matmul_tb(self.value(*b), g));
                self.acc(grads, *b, matmul(self.value(*a), g));
            }
            Op::MatmulTb(a, b) => {
                self.acc(grads, *a, matmul(g, self.value(*b)));
                self.acc(grads, *b, matmul_ta(g, self.value(*a)));
            }
            Op::Bmm(a, b) => {
                let (da, db) = bmm_backward(self.value(*a), self.value(*b), g);
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::AddRowBcast(a, bias) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *bias, sum_rows(g));
            }
            Op::MulRowBcast(a, w) => {
                let x = self.value(*a);
                let wv = self.value(*w);
                let cols = x.cols();
                let mut da = g.clone();
                for (idx, v) in da.data_mut().iter_mut().enumerate() {
                    *v *= wv.data()[idx % cols];
                }
                self.acc(grads, *a, da);
                let prod = elementwise(g, x, |u, v| u * v);
                self.acc(grads, *w, sum_rows(&prod));
            }
            Op::MulColBcast(a, s) => {
                let x = self.value(*a);
                let sv = self.value(*s);
                let cols = x.cols();
                let mut da = g.clone();
                for r in 0..x.rows() {
                    let f = sv.data()[r];
                    for v in &mut da.data_mut()[r * cols..(r + 1) * cols] {
                        *v *= f;
                    }
                }
                self.acc(grads, *a, da);
                let ds: Vec<f64> = (0..x.rows())
                    .map(|r| {
                        g.data()[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(&x.data()[r * cols..(r + 1) * cols])
                            .map(|(u, v)| u * v)
                            .sum()
                    })
                    .collect();
                self.acc(grads, *s, Tensor::new(&[x.rows(), 1], ds));
            }
            Op::BroadcastRows(a) => self.acc(grads, *a, sum_rows_keep1(g)),
            Op::MeanPoolRows(a, factor) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                for r in 0..x.rows() {
                    let o = r / factor;
                    for c in 0..cols {
                        d[r * cols + c] = g.at2(o, c) / *factor as f64;
                    }
                }
                self.acc(grads, *a, Tensor::new(x.shape(), d));
            }
            Op::SliceCols(a, start, len) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                for r in 0..x.rows() {
                    for c in 0..*len {
                        d[r * cols + start + c] = g.at2(r, c);
                    }
                }
                self.acc(grads, *a, Tensor::new(x.shape(), d));
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    let mut d = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        d.extend_from_slice(
                            &g.data()[r * g.cols() + offset..r * g.cols() + offset + c],
                        );
                    }
                    self.acc(grads, *p, Tensor::new(&[rows, c], d));
                    offset += c;
                }
            }
            Op::SliceRows(a, start, len) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                d[start * cols..(start + len) * cols].copy_from_slice(g.data());
                self.acc(grads, *a, Tensor::new(x.shape(), d));
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for p in parts {
                    let r = self.value(*p).rows();
                    let d = g.data()[offset * cols..(offset + r) * cols].to_vec();
                    self.acc(grads, *p, Tensor::new(&[r, cols], d));
                    offset += r;
                }
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.acc(grads, *a, g.clone().reshaped(&shape));
            }
            Op::Softmax(a) => {
                let y = &self.nodes[i].value;
                let (r, c) = (y.rows(), y.cols());
                let mut d = vec![0.0; r * c];
                for row in 0..r {
                    let yv = y.row(row);
                    let gv = &g.data()[row * c..(row + 1) * c];
                    let dot: f64 = yv.iter().zip(gv).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        d[row * c + j] = yv[j] * (gv[j] - dot);
                    }
                }
                self.acc(grads, *a, Tensor::new(&[r, c], d));
            }
            Op::LayerNorm(x, gamma, beta) => {
                let xs = self.value(*x);
                let gm = self.value(*gamma);
                let (r, c) = (xs.rows(), xs.cols());
                let mut dx = vec![0.0; r * c];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for row in 0..r {
                    let xv = xs.row(row);
                    let gv = &g.data()[row * c..(row + 1) * c];
                    let mean = xv.iter().sum::<f64>() / c as f64;
                    let var = xv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let mut sum_dy = 0.0;
                    let mut sum_dy_xhat = 0.0;
                    for j in 0..c {
                        let xhat = (xv[j] - mean) * inv;
                        let dy = gv[j] * gm.data()[j];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                        dgamma[j] += gv[j] * xhat;
                        dbeta[j] += gv[j];
                    }
                    for j in 0..c {
                        let xhat = (xv[j] - mean) * inv;
                        let dy = gv[j] * gm.data()[j];
                        dx[row * c + j] =
                            inv * (dy - sum_dy / c as f64 - xhat * sum_dy_xhat / c as f64);
                    }
                }
                self.acc(grads, *x, Tensor::new(&[r, c], dx));
                self.acc(grads, *gamma, Tensor::new(&[c], dgamma));
                self.acc(grads, *beta, Tensor::new(&[c], dbeta));
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                let d = Tensor::new(
                    x.shape(),
                    x.data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| {
                            let phi_cdf = 0.5 * (1.0 + libm::erf(xv / core::f64::consts::SQRT_2));
                            let phi_pdf =
                                (-(xv * xv) / 2.0).exp() / (2.0 * crate::math::PI).sqrt();
                            gv * (phi_cdf + xv * phi_pdf)
                        })
                        .collect(),
                );
                self.acc(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                let d = elementwise(g, y, |gv, yv| gv * yv * (1.0 - yv));
                self.acc(grads, *a, d);
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let d = elementwise(g, x, |gv, xv| gv / xv);
                self.acc(grads, *a, d);
            }
            Op::NegPart(a) => {
                let x = self.value(*a);
                let d = elementwise(g, x, |gv, xv| if xv < 0.0 { gv } else { 0.0 });
                self.acc(grads, *a, d);
            }
            Op::Clamp01(a) => {
                let x = self.value(*a);
                let d = elementwise(g, x, |gv, xv| if xv > 0.0 && xv < 1.0 { gv } else { 0.0 });
                self.acc(grads, *a, d);
            }
            Op::SumAll(a) => {
                let x = self.value(*a);
                self.acc(grads, *a, Tensor::full(x.shape(), g.data()[0]));
            }
            Op::MeanAll(a) => {
                let x = self.value(*a);
                self.acc(grads, *a, Tensor::full(x.shape(), g.data()[0] / x.len() as f64));
            }
            Op::SumLastKeep(a) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                for r in 0..x.rows() {
                    let gr = g.data()[r];
                    for c in 0..cols {
                        d[r * cols + c] = gr;
                    }
                }
                self.acc(grads, *a, Tensor::new(x.shape(), d));
            }
        }
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn sum_rows(g: &Tensor) -> Tensor {
    let cols = g.cols();
    let mut out = vec![0.0; cols];
    for r in 0..g.rows() {
        for c in 0..cols {
            out[c] += g.at2(r, c);
        }
    }
    Tensor::new(&[cols], out)
}

fn sum_rows_keep1(g: &Tensor) -> Tensor {
    let cols = g.cols();
    sum_rows(g).reshaped(&[1, cols])
}

fn bmm_value(a: &Tensor, b: &Tensor) -> Tensor {
    let (ba, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let (bb, kb, n) = (b.shape()[0], b.shape()[1], b.shape()[2]);
    assert_eq!(ba, bb, "bmm batch mismatch");
    assert_eq!(k, kb, "bmm inner dim mismatch");
    let mut out = vec![0.0; ba * m * n];
    for s in 0..ba {
        let av = &a.data()[s * m * k..(s + 1) * m * k];
        let bv = &b.data()[s * k * n..(s + 1) * k * n];
        let ov = &mut out[s * m * n..(s + 1) * m * n];
        for i in 0..m {
            for kk in 0..k {
                let f = av[i * k + kk];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    ov[i * n + j] += f * bv[kk * n + j];
                }
            }
        }
    }
    Tensor::new(&[ba, m, n], out)
}

fn bmm_backward(a: &Tensor, b: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (batch, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let n = b.shape()[2];
    let mut da = vec![0.0; a.len()];
    let mut db = vec![0.0; b.len()];
    for s in 0..batch {
        let av = &a.data()[s * m * k..(s + 1) * m * k];
        let bv = &b.data()[s * k * n..(s + 1) * k * n];
        let gv = &g.data()[s * m * n..(s + 1) * m * n];
        let dav = &mut da[s * m * k..(s + 1) * m * k];
        let dbv = &mut db[s * k * n..(s + 1) * k * n];
        // dA = g @ B^T, dB = A^T @ g.
        for i in 0..m {
            for kk in 0..k {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += gv[i * n + j] * bv[kk * n + j];
                }
                dav[i * k + kk] = acc;
            }
        }
        for kk in 0..k {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += av[i * k + kk] * gv[i * n + j];
                }
                dbv[kk * n + j] = acc;
            }
        }
    }
    (Tensor::new(a.shape(), da), Tensor::new(b.shape(), db))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use alloc::boxed::Box;
    use alloc::vec::Vec;

    /// Central finite differences of a scalar-valued builder at `x`.
    pub(crate) fn numeric_grad(x: &Tensor, build: &dyn Fn(&mut Graph, Var) -> Var) -> Tensor {
        let h = 1e-5;
        let mut out = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let mut gp = Graph::new();
            let vp = gp.leaf(xp, false);
            let lp = build(&mut gp, vp);
            let mut gm = Graph::new();
            let vm = gm.leaf(xm, false);
            let lm = build(&mut gm, vm);
            out.push((gp.scalar_value(lp) - gm.scalar_value(lm)) / (2.0 * h));
        }
        Tensor::new(x.shape(), out)
    }

    /// Max relative error between analytic and numeric gradients.
    pub(crate) fn check_grad(x: &Tensor, build: &dyn Fn(&mut Graph, Var) -> Var) -> f64 {
        let mut g = Graph::new();
        let v = g.leaf(x.clone(), true);
        let loss = build(&mut g, v);
        let grads = g.backward(loss);
        let analytic = grads.get(v).expect("input should receive a gradient");
        let numeric = numeric_grad(x, build);
        let mut worst = 0.0_f64;
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            let denom = 1.0_f64.max(a.abs()).max(n.abs());
            worst = worst.max((a - n).abs() / denom);
        }
        worst
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = rng_from_seed(1);
        let x = Tensor::randn(&[5, 7], 1.0, &mut rng);
        let mut g = Graph::new();
        let v = g.leaf(x, false);
        let s = g.softmax(v);
        for r in 0..5 {
            let sum: f64 = g.value(s).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn elementwise_and_reduction_grads_match_finite_differences() {
        let mut rng = rng_from_seed(2);
        let x = Tensor::randn(&[4, 3], 1.0, &mut rng);
        let builders: Vec<(&str, Box<dyn Fn(&mut Graph, Var) -> Var>)> = alloc::vec![
            (
                "mul+mean",
                Box::new(|g: &mut Graph, v: Var| {
                    let y = g.mul(v, v);
                    g.mean_all(y)
                }) as _
            ),
            (
                "gelu+sum",
                Box::new(|g: &mut Graph, v: Var| {
                    let y = g.gelu(v);
                    g.sum_all(y)
                }) as _
            ),
            (
                "sigmoid",
                Box::new(|g: &mut Graph, v: Var| {
                    let y = g.sigmoid(v);
                    g.mean_all(y)
                }) as _
            ),
            (
                "softmax",
                Box::new(|g: &mut Graph, v: Var| {
                    let y = g.softmax(v);
                    let sq = g.mul(y, y);
                    g.sum_all(sq)
                }) as _
            ),
            (
                "pow",
                Box::new(|g: &mut Graph, v: Var| {
                    let sq = g.mul(v, v);
                    let y = g.add_const(sq, 0.3);
                    let p = g.pow_const(y, 0.5);
                    g.mean_all(p)
                }) as _
            ),
            (
                "slices",
                Box::new(|g: &mut Graph, v: Var| {
                    let a = g.slice_cols(v, 0, 2);
                    let b = g.slice_cols(v, 1, 2);
                    let c = g.mul(a, b);
                    let d = g.concat_cols(&[c, a]);
                    let e = g.slice_rows(d, 1, 2);
                    g.mean_all(e)
                }) as _
            ),
        ];
        for (name, b) in &builders {
            let err = check_grad(&x, b.as_ref());
            assert!(err < 1e-7, "{name}: relative error {err}");
        }
    }

    #[test]
    fn matmul_grads_match_finite_differences() {
        let mut rng = rng_from_seed(3);
        let w = Tensor::randn(&[3, 4], 0.7, &mut rng);
        let x = Tensor::randn(&[5, 3], 0.9, &mut rng);

        let wc = w.clone();
        let err = check_grad(&x, &move |g: &mut Graph, v: Var| {
            let wv = g.constant(wc.clone());
            let y = g.matmul(v, wv);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        });
        assert!(err < 1e-7, "matmul wrt lhs: {err}");

        let xc = x.clone();
        let err = check_grad(&w, &move |g: &mut Graph, v: Var| {
            let xv = g.constant(xc.clone());
            let y = g.matmul(xv, v); // (5,4)
            let z = g.matmul_tb(y, v); // (5,3)
            let q = g.matmul_ta(xv, z); // (3,3)
            let sq = g.mul(q, q);
            g.mean_all(sq)
        });
        assert!(err < 1e-6, "matmul_ta/tb: {err}");
    }

    #[test]
    fn bmm_and_broadcast_grads_match_finite_differences() {
        let mut rng = rng_from_seed(4);
        let a = Tensor::randn(&[3, 2, 2], 0.8, &mut rng);
        let err = check_grad(&a, &|g: &mut Graph, v: Var| {
            let y = g.bmm(v, v);
            g.mean_all(y)
        });
        assert!(err < 1e-7, "bmm: {err}");

        let x = Tensor::randn(&[4, 3], 1.0, &mut rng);
        let err = check_grad(&x, &|g: &mut Graph, v: Var| {
            let s = g.sum_last_keep(v);
            let y = g.mul_col_bcast(v, s);
            let p = g.mean_pool_rows(y, 2);
            g.mean_all(p)
        });
        assert!(err < 1e-7, "col bcast + pool: {err}");

        let w = Tensor::randn(&[3], 1.0, &mut rng);
        let xc = x.clone();
        let err = check_grad(&w, &move |g: &mut Graph, v: Var| {
            let xv = g.constant(xc.clone());
            let y = g.mul_row_bcast(xv, v);
            let z = g.add_row_bcast(y, v);
            g.mean_all(z)
        });
        assert!(err < 1e-7, "row bcast: {err}");

        let row = Tensor::randn(&[1, 5], 1.0, &mut rng);
        let err = check_grad(&row, &|g: &mut Graph, v: Var| {
            let y = g.broadcast_rows(v, 4);
            let sq = g.mul(y, y);
            g.sum_all(sq)
        });
        assert!(err < 1e-7, "broadcast rows: {err}");
    }

    #[test]
    fn layer_norm_grads_match_finite_differences() {
        let mut rng = rng_from_seed(5);
        let x = Tensor::randn(&[4, 6], 1.3, &mut rng);
        let gamma = Tensor::randn(&[6], 0.5, &mut rng);
        let beta = Tensor::randn(&[6], 0.5, &mut rng);

        let (gc, bc) = (gamma.clone(), beta.clone());
        let err = check_grad(&x, &move |g: &mut Graph, v: Var| {
            let gm = g.constant(gc.clone());
            let bt = g.constant(bc.clone());
            let y = g.layer_norm(v, gm, bt);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        });
        assert!(err < 1e-6, "layer_norm wrt x: {err}");

        let xc = x.clone();
        let bc = beta.clone();
        let err = check_grad(&gamma, &move |g: &mut Graph, v: Var| {
            let xv = g.constant(xc.clone());
            let bt = g.constant(bc.clone());
            let y = g.layer_norm(xv, v, bt);
            let sq = g.mul(y, y);
            g.mean_all(sq)
        });
        assert!(err < 1e-7, "layer_norm wrt gamma: {err}");
    }

    #[test]
    fn piecewise_ops_grads_away_from_kinks() {
        let x = Tensor::new(&[2, 3], alloc::vec![-1.5, 0.4, 0.9, -0.2, 0.7, -0.8]);
        let err = check_grad(&x, &|g: &mut Graph, v: Var| {
            let y = g.neg_part(v);
            let z = g.clamp01(v);
            let s = g.add(y, z);
            let sq = g.mul(s, s);
            g.mean_all(sq)
        });
        assert!(err < 1e-7, "piecewise: {err}");
    }

    #[test]
    fn gradients_do_not_flow_into_constants() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(2.0), true);
        let b = g.constant(Tensor::scalar(3.0));
        let y = g.mul(a, b);
        let grads = g.backward(y);
        assert!(grads.get(b).is_none());
        assert!((grads.get(a).unwrap().data()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn mismatched_add_panics() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let _ = g.add(a, b);
    }
}
