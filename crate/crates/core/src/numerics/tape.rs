//! Reverse-mode evaluation over [`Tensor`] values.
//!
//! A [`Tape`] records each primitive as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! accumulates adjoints into every node that contributed to it.

use crate::error::{Error, Result};

use super::tensor::{matmul_raw, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    LogSumExpRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    ColMean(Var),
    MaxConst(Var, f64),
    Clamp(Var, f64, f64),
    SqDiff(Var, Var),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn row_lse(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Leaves receive adjoints but have no parents.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                left: av.shape().to_vec(),
                right: vec![],
            });
        }
        let out = av.transpose();
        self.push("transpose", out, Op::Transpose(a))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b))
    }

    /// Adds a row vector (shape `[n]` or `[1, n]`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        let (_, n) = av.dims2();
        if av.shape().len() != 2 || rv.rows() != 1 || rv.cols() != n {
            return Err(shape_err("add_row", av, rv));
        }
        let mut out = av.clone();
        let r = rv.data();
        for chunk in out.data_mut().chunks_mut(n) {
            for (o, b) in chunk.iter_mut().zip(r) {
                *o += b;
            }
        }
        self.push("add_row", out, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + c);
        self.push("add_scalar", out, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push("exp", out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push("log", out, Op::Log(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(softplus);
        self.push("softplus", out, Op::Softplus(a))
    }

    /// Row-wise log-sum-exp; output shape `[rows, 1]`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let rows = av.rows();
        let data = (0..rows).map(|r| row_lse(av.row_slice(r))).collect();
        let out = Tensor::from_parts(vec![rows, 1], data);
        self.push("log_sum_exp_rows", out, Op::LogSumExpRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..av.rows() {
            let lse = row_lse(av.row_slice(r));
            for v in out.row_slice_mut(r) {
                *v -= lse;
            }
        }
        self.push("log_softmax_rows", out, Op::LogSoftmaxRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let out = Tensor::scalar(av.sum() / av.len() as f64);
        self.push("mean", out, Op::Mean(a))
    }

    /// Mean over rows; output shape `[1, cols]`.
    pub fn col_mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (r, c) = av.dims2();
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (d, v) in data.iter_mut().zip(av.row_slice(i)) {
                *d += v;
            }
        }
        data.iter_mut().for_each(|d| *d /= r as f64);
        self.push("col_mean", Tensor::row(data), Op::ColMean(a))
    }

    /// Elementwise `max(x, c)`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(c));
        self.push("max_const", out, Op::MaxConst(a, c))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push("clamp", out, Op::Clamp(a, lo, hi))
    }

    /// Elementwise `(a - b)²`.
    pub fn sq_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sq_diff", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| (x - y) * (x - y));
        self.push("sq_diff", out, Op::SqDiff(a, b))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let (rows, cols) = av.dims2();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape {
                op: "gather_rows",
                left: av.shape().to_vec(),
                right: vec![bad],
            });
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(av.row_slice(i));
        }
        let out = Tensor::from_parts(vec![idx.len(), cols], data);
        self.push("gather_rows", out, Op::GatherRows(a, idx.to_vec()))
    }

    /// Adjoints of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: rv.shape().to_vec(),
                right: vec![],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, _idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2();
                let n = bv.cols();
                // dA = G·Bᵀ, dB = Aᵀ·G
                let ga = g.matmul_t(bv).expect("matmul adjoint shape");
                let at = av.transpose();
                let gb = matmul_raw(at.data(), g.data(), k, m, n);
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, |gv, x| gv * x));
                acc(*b, g.zip_map(av, |gv, x| gv * x));
            }
            Op::AddRow(a, row) => {
                let rv = self.value(*row);
                let n = rv.len();
                let mut sums = vec![0.0; n];
                for chunk in g.data().chunks(n) {
                    for (s, v) in sums.iter_mut().zip(chunk) {
                        *s += v;
                    }
                }
                acc(*a, g.clone());
                acc(*row, Tensor::from_parts(rv.shape().to_vec(), sums));
            }
            Op::Scale(a, c) => acc(*a, g.map(|v| v * c)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Tanh(a) => acc(*a, g.zip_map(y, |gv, t| gv * (1.0 - t * t))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(y, |gv, s| gv * s * (1.0 - s))),
            Op::Exp(a) => acc(*a, g.zip_map(y, |gv, e| gv * e)),
            Op::Log(a) => acc(*a, g.zip_map(self.value(*a), |gv, x| gv / x)),
            Op::Softplus(a) => acc(*a, g.zip_map(self.value(*a), |gv, x| gv * sigmoid(x))),
            Op::LogSumExpRows(a) => {
                let av = self.value(*a);
                let mut out = av.clone();
                for r in 0..av.rows() {
                    let lse = y.data()[r];
                    let gr = g.data()[r];
                    for v in out.row_slice_mut(r) {
                        *v = gr * (*v - lse).exp();
                    }
                }
                acc(*a, out);
            }
            Op::LogSoftmaxRows(a) => {
                // dx = g - softmax · Σ g
                let mut out = g.clone();
                for r in 0..y.rows() {
                    let gsum: f64 = g.row_slice(r).iter().sum();
                    for (o, ly) in out.row_slice_mut(r).iter_mut().zip(y.row_slice(r)) {
                        *o -= ly.exp() * gsum;
                    }
                }
                acc(*a, out);
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                acc(*a, Tensor::full(&shape, g.item()));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::full(av.shape(), g.item() / av.len() as f64));
            }
            Op::ColMean(a) => {
                let av = self.value(*a);
                let r = av.rows() as f64;
                let mut out = Tensor::zeros(av.shape());
                for i in 0..av.rows() {
                    for (o, gv) in out.row_slice_mut(i).iter_mut().zip(g.data()) {
                        *o = gv / r;
                    }
                }
                acc(*a, out);
            }
            Op::MaxConst(a, c) => {
                let c = *c;
                acc(*a, g.zip_map(self.value(*a), |gv, x| if x > c { gv } else { 0.0 }));
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(
                    *a,
                    g.zip_map(self.value(*a), |gv, x| if x > lo && x < hi { gv } else { 0.0 }),
                );
            }
            Op::SqDiff(a, b) => {
                let ga = self
                    .value(*a)
                    .zip_map(self.value(*b), |x, z| 2.0 * (x - z))
                    .zip_map(g, |d, gv| d * gv);
                acc(*b, ga.map(|v| -v));
                acc(*a, ga);
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let mut out = Tensor::zeros(av.shape());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, gv) in out.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                        *o += gv;
                    }
                }
                acc(*a, out);
            }
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` if `v` did not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
