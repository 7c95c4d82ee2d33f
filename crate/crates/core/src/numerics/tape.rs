//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation eagerly (values are computed on push) and
//! replays the records backwards in [`Tape::backward`]. Parameters enter through
//! [`Tape::param`], which binds a node to a [`ParamStore`] entry; after the
//! backward pass [`Tape::accumulate_into`] adds the parameter gradients into the
//! store (`+=`, never overwrite).

use std::collections::HashMap;

use super::{matrix::softmax_in_place, Activation, Matrix, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    OneMinus(Var),
    Act(Var, Activation),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    MeanRows(Var),
    Sum(Var),
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    param_order: Vec<(String, Var)>,
    grads: Vec<Option<Matrix>>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1x1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds the named parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Param, true);
        self.params.insert(name.to_owned(), v);
        self.param_order.push((name.to_owned(), v));
        Ok(v)
    }

    fn dim_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
        Error::Dimension {
            op,
            left: a.shape(),
            right: b.shape(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// `a · b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMulT(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Adds the `1 x c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (am, rm) = (self.value(a), self.value(row));
        if rm.rows() != 1 || rm.cols() != am.cols() {
            return Err(Self::dim_err("add_row", am, rm));
        }
        let mut value = am.clone();
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(rm.data()) {
                *x += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(value, Op::AddRow(a, row), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, factor), ng)
    }

    /// Multiplies every entry of `a` by the `1x1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Self::dim_err("scale_by", self.value(a), self.value(s)));
        }
        let factor = self.scalar(s);
        let value = self.value(a).scale(factor);
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(value, Op::ScaleBy(a, s), ng))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 - v);
        let ng = self.ng(a);
        self.push(value, Op::OneMinus(a), ng)
    }

    pub fn act(&mut self, a: Var, activation: Activation) -> Var {
        let value = self.value(a).elementwise(activation);
        let ng = self.ng(a);
        self.push(value, Op::Act(a, activation), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.act(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.act(a, Activation::Sigmoid)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax_rows();
        let ng = self.ng(a);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&mats)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_rows(&mats)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.value(a);
        if start + len > m.rows() {
            return Err(Error::Index {
                what: "slice_rows end",
                index: start + len,
                size: m.rows(),
            });
        }
        let value = Matrix::from_vec(
            len,
            m.cols(),
            m.data()[start * m.cols()..(start + len) * m.cols()].to_vec(),
        )?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::SliceRows(a, start), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.value(a);
        if start + len > m.cols() {
            return Err(Error::Index {
                what: "slice_cols end",
                index: start + len,
                size: m.cols(),
            });
        }
        let mut data = Vec::with_capacity(m.rows() * len);
        for r in 0..m.rows() {
            data.extend_from_slice(&m.row(r)[start..start + len]);
        }
        let value = Matrix::from_vec(m.rows(), len, data)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::SliceCols(a, start), ng))
    }

    /// Row lookup: output row `k` is row `ids[k]` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let m = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * m.cols());
        for &id in ids {
            if id >= m.rows() {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    size: m.rows(),
                });
            }
            data.extend_from_slice(m.row(id));
        }
        let value = Matrix::from_vec(ids.len(), m.cols(), data)?;
        let ng = self.ng(table);
        Ok(self.push(value, Op::Gather(table, ids.to_vec()), ng))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).reshape(rows, cols)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::Reshape(a), ng))
    }

    /// Column means as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Error::EmptyInput("mean_rows"));
        }
        let mut out = Matrix::zeros(1, m.cols());
        for r in 0..m.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        let n = m.rows() as f64;
        out.data_mut().iter_mut().for_each(|v| *v /= n);
        let ng = self.ng(a);
        Ok(self.push(out, Op::MeanRows(a), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// Mean over rows of `-log softmax(logits)[row, target]`, as a `1x1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (loss, _) = super::cross_entropy(self.value(logits), targets)?;
        let ng = self.ng(logits);
        Ok(self.push(Matrix::scalar(loss), Op::CrossEntropy(logits, targets.to_vec()), ng))
    }

    /// Back-propagates from the `1x1` node `root` (seeded with gradient 1).
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward root must be 1x1, got {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[i];
        let send = |v: Var, delta: Matrix, grads: &mut [Option<Matrix>]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                // C = A B: dA = G B^T, dB = A^T G
                if self.ng(*a) {
                    send(*a, g.matmul_t(self.value(*b))?, grads);
                }
                if self.ng(*b) {
                    send(*b, self.value(*a).t_matmul(g)?, grads);
                }
            }
            Op::MatMulT(a, b) => {
                // C = A B^T: dA = G B, dB = G^T A
                if self.ng(*a) {
                    send(*a, g.matmul(self.value(*b))?, grads);
                }
                if self.ng(*b) {
                    send(*b, g.t_matmul(self.value(*a))?, grads);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.clone(), grads);
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone(), grads);
                if self.ng(*row) {
                    let mut acc = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in acc.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    send(*row, acc, grads);
                }
            }
            Op::Sub(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.scale(-1.0), grads);
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    send(*a, g.hadamard(self.value(*b))?, grads);
                }
                if self.ng(*b) {
                    send(*b, g.hadamard(self.value(*a))?, grads);
                }
            }
            Op::Scale(a, c) => send(*a, g.scale(*c), grads),
            Op::ScaleBy(a, s) => {
                let factor = self.scalar(*s);
                if self.ng(*a) {
                    send(*a, g.scale(factor), grads);
                }
                if self.ng(*s) {
                    let dot: f64 = g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).sum();
                    send(*s, Matrix::scalar(dot), grads);
                }
            }
            Op::OneMinus(a) => send(*a, g.scale(-1.0), grads),
            Op::Act(a, activation) => {
                let y = &node.value;
                let mut d = g.clone();
                for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *dv *= activation.derivative_from_output(yv);
                }
                send(*a, d, grads);
            }
            Op::SoftmaxRows(a) => {
                // dx = y ⊙ (g - <g, y>) per row
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = yr[c] * (gr[c] - dot);
                    }
                }
                send(*a, d, grads);
            }
            Op::Transpose(a) => send(*a, g.transpose(), grads),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.ng(p) {
                        let mut data = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        send(p, Matrix::from_vec(g.rows(), w, data)?, grads);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if self.ng(p) {
                        let c = g.cols();
                        let data = g.data()[offset * c..(offset + h) * c].to_vec();
                        send(p, Matrix::from_vec(h, c, data)?, grads);
                    }
                    offset += h;
                }
            }
            Op::SliceRows(a, start) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                let c = src.cols();
                d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(*a, d, grads);
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                send(*a, d, grads);
            }
            Op::Gather(table, ids) => {
                let src = self.value(*table);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (k, &id) in ids.iter().enumerate() {
                    for (o, v) in d.row_mut(id).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                send(*table, d, grads);
            }
            Op::Reshape(a) => {
                let (r, c) = self.shape(*a);
                send(*a, g.reshape(r, c)?, grads);
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for row in 0..r {
                    for (o, v) in d.row_mut(row).iter_mut().zip(g.data()) {
                        *o = v / r as f64;
                    }
                }
                send(*a, d, grads);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                send(*a, Matrix::filled(r, c, g.data()[0]), grads);
            }
            Op::CrossEntropy(logits, targets) => {
                let m = self.value(*logits);
                let n = m.rows() as f64;
                let mut d = m.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let row = d.row_mut(r);
                    softmax_in_place(row);
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= g.data()[0] / n);
                }
                send(*logits, d, grads);
            }
        }
        Ok(())
    }

    /// Gradient of the last backward root with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds every bound parameter's gradient into `store`.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for (name, v) in &self.param_order {
            if let Some(g) = self.grad(*v) {
                store.accumulate(name, g)?;
            }
        }
        Ok(())
    }
}
