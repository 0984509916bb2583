//! Reverse-mode differentiation over a fixed set of matrix operations.
//!
//! Values are recorded eagerly as ops are pushed. Discrete choices made by
//! callers (top-k indices, routing masks) enter the tape as constants or op
//! attributes, so [`Tape::replay`] re-evaluates the same computation under
//! new leaf values. That is what the finite-difference checker relies on.

use std::collections::HashMap;

use super::kernels::{cosine_or_none, dot_norms, sigmoid, silu, silu_grad, softmax_in_place};
use super::{Matrix, NumericsError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64, f64),
    Sigmoid(Var),
    Silu(Var),
    SoftmaxRows(Var),
    CosineRows(Var, Var),
    MeanRows(Var),
    Sum(Var),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>, usize),
    ConcatRows(Vec<Var>),
    CrossEntropy(Var, usize),
    Kl(Vec<f64>, Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
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

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { op: Op::Constant, value });
        Var(self.nodes.len() - 1)
    }

    /// Registers a named parameter leaf. Names must be unique on a tape.
    pub fn param(&mut self, name: impl Into<String>, value: Matrix) -> Var {
        self.nodes.push(Node { op: Op::Param, value });
        let var = Var(self.nodes.len() - 1);
        self.params.push((name.into(), var));
        var
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Overwrites a leaf value. Dependent nodes keep stale values until
    /// [`Tape::replay`] runs.
    pub fn set_leaf(&mut self, v: Var, value: Matrix) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !matches!(node.op, Op::Constant | Op::Param) {
            return Err(NumericsError::InvalidArgument("set_leaf on a non-leaf node".into()));
        }
        if node.value.shape() != value.shape() {
            return Err(NumericsError::Shape("set_leaf changes leaf shape".into()));
        }
        node.value = value;
        Ok(())
    }

    /// Recomputes every non-leaf node in recording order.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Constant | Op::Param) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = self.eval(&op)?;
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    /// `a + 1·row`, broadcasting a `1 × n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// Scales row `r` of `a` by `col[r]`, where `col` is `rows × 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        self.push(Op::MulCol(a, col))
    }

    /// `scale · a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.push(Op::Affine(a, scale, shift))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.affine(a, s, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sigmoid(a))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Silu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SoftmaxRows(a))
    }

    /// Row-wise cosine similarity of two equally shaped matrices, `rows × 1`.
    /// A row where either side is the zero vector yields `1` with zero
    /// gradient.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::CosineRows(a, b))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose(a))
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        self.push(Op::GatherRows(a, indices))
    }

    /// Places row `k` of `a` at row `indices[k]` of a zero `total × n` matrix.
    pub fn scatter_rows(&mut self, a: Var, indices: Vec<usize>, total: usize) -> Result<Var> {
        self.push(Op::ScatterRows(a, indices, total))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        self.push(Op::ConcatRows(parts))
    }

    /// `−ln softmax(logits)[target]` for a `1 × n` logit row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.push(Op::CrossEntropy(logits, target))
    }

    /// `KL(p ‖ q)` for a constant distribution `p` and a `1 × n` row `q`.
    pub fn kl(&mut self, p: &[f64], q: Var) -> Result<Var> {
        self.push(Op::Kl(p.to_vec(), q))
    }

    /// Weighted sum of scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for &(w, v) in terms {
            let scaled = self.scale(v, w)?;
            acc = Some(match acc {
                None => scaled,
                Some(a) => self.add(a, scaled)?,
            });
        }
        acc.ok_or_else(|| NumericsError::Empty("weighted sum of no terms".into()))
    }

    fn eval(&self, op: &Op) -> Result<Matrix> {
        let v = |x: &Var| &self.nodes[x.0].value;
        match op {
            Op::Constant | Op::Param => unreachable!("leaves are not evaluated"),
            Op::MatMul(a, b) => v(a).matmul(v(b)),
            Op::Add(a, b) => v(a).add(v(b)),
            Op::AddRow(a, r) => v(a).add_row(v(r)),
            Op::Sub(a, b) => v(a).sub(v(b)),
            Op::Mul(a, b) => v(a).hadamard(v(b)),
            Op::MulCol(a, c) => {
                let (a, c) = (v(a), v(c));
                if c.cols() != 1 || c.rows() != a.rows() {
                    return Err(NumericsError::Shape(format!(
                        "column scale {:?} against {:?}",
                        c.shape(),
                        a.shape()
                    )));
                }
                let mut out = a.clone();
                for r in 0..a.rows() {
                    let s = c.get(r, 0);
                    out.row_mut(r).iter_mut().for_each(|x| *x *= s);
                }
                Ok(out)
            }
            Op::Affine(a, s, t) => Ok(v(a).map(|x| s * x + t)),
            Op::Sigmoid(a) => Ok(v(a).map(sigmoid)),
            Op::Silu(a) => Ok(v(a).map(silu)),
            Op::SoftmaxRows(a) => {
                let mut out = v(a).clone();
                if out.cols() == 0 {
                    return Err(NumericsError::Empty("softmax over zero columns".into()));
                }
                for r in 0..out.rows() {
                    softmax_in_place(out.row_mut(r));
                }
                Ok(out)
            }
            Op::CosineRows(a, b) => {
                let (a, b) = (v(a), v(b));
                if a.shape() != b.shape() {
                    return Err(NumericsError::Shape("cosine rows of unequal shapes".into()));
                }
                let data = (0..a.rows())
                    .map(|r| cosine_or_none(a.row(r), b.row(r)).unwrap_or(1.0))
                    .collect();
                Ok(Matrix::from_raw(a.rows(), 1, data))
            }
            Op::MeanRows(a) => v(a).mean_rows(),
            Op::Sum(a) => Ok(Matrix::from_raw(1, 1, vec![v(a).sum()])),
            Op::Transpose(a) => Ok(v(a).transpose()),
            Op::GatherRows(a, idx) => v(a).gather_rows(idx),
            Op::ScatterRows(a, idx, total) => {
                let a = v(a);
                if idx.len() != a.rows() || idx.iter().any(|&i| i >= *total) {
                    return Err(NumericsError::Shape("scatter indices do not fit".into()));
                }
                let mut out = Matrix::zeros(*total, a.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, x) in out.row_mut(i).iter_mut().zip(a.row(k)) {
                        *o += x;
                    }
                }
                Ok(out)
            }
            Op::ConcatRows(parts) => {
                let parts: Vec<&Matrix> = parts.iter().map(v).collect();
                Matrix::concat_rows(&parts)
            }
            Op::CrossEntropy(a, t) => {
                let a = v(a);
                if a.rows() != 1 || *t >= a.cols() {
                    return Err(NumericsError::Shape(format!(
                        "cross entropy target {t} on {:?} logits",
                        a.shape()
                    )));
                }
                let x = a.row(0);
                let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + x.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                Ok(Matrix::from_raw(1, 1, vec![lse - x[*t]]))
            }
            Op::Kl(p, q) => {
                let q = v(q);
                if q.rows() != 1 || q.cols() != p.len() {
                    return Err(NumericsError::Shape("KL target length mismatch".into()));
                }
                let mut total = 0.0;
                for (&pi, &qi) in p.iter().zip(q.row(0)) {
                    if pi > 0.0 {
                        total += if qi > 0.0 { pi * (pi / qi).ln() } else { f64::INFINITY };
                    }
                }
                Ok(Matrix::from_raw(1, 1, vec![total]))
            }
        }
    }

    /// Gradients of a scalar node with respect to every node on the tape.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(NumericsError::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |x: &Var| &self.nodes[x.0].value;
            match &node.op {
                Op::Constant | Op::Param => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&val(b).transpose())?;
                    let db = val(a).transpose().matmul(&g)?;
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, r) => {
                    let mut dr = vec![0.0; g.cols()];
                    for row in 0..g.rows() {
                        for (d, x) in dr.iter_mut().zip(g.row(row)) {
                            *d += x;
                        }
                    }
                    self.accumulate(&mut grads, *r, Matrix::from_raw(1, g.cols(), dr));
                    self.accumulate(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *b, g.scale(-1.0));
                    self.accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = g.hadamard(val(b))?;
                    let db = g.hadamard(val(a))?;
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::MulCol(a, c) => {
                    let (av, cv) = (val(a), val(c));
                    let mut da = g.clone();
                    let mut dc = Matrix::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = cv.get(r, 0);
                        let dot: f64 = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                        dc.set(r, 0, dot);
                        da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *c, dc);
                }
                Op::Affine(a, s, _) => self.accumulate(&mut grads, *a, g.scale(*s)),
                Op::Sigmoid(a) => {
                    let d = g.zip_with(&node.value, |gi, y| gi * y * (1.0 - y))?;
                    self.accumulate(&mut grads, *a, d);
                }
                Op::Silu(a) => {
                    let d = g.zip_with(val(a), |gi, x| gi * silu_grad(x))?;
                    self.accumulate(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (c, out) in d.row_mut(r).iter_mut().enumerate() {
                            *out = yr[c] * (gr[c] - dot);
                        }
                    }
                    self.accumulate(&mut grads, *a, d);
                }
                Op::CosineRows(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    for r in 0..av.rows() {
                        let (u, w) = (av.row(r), bv.row(r));
                        let (dot, nu, nw) = dot_norms(u, w);
                        if nu == 0.0 || nw == 0.0 {
                            continue;
                        }
                        let gr = g.get(r, 0);
                        let c = dot / (nu * nw);
                        let inv = 1.0 / (nu * nw);
                        for (k, out) in da.row_mut(r).iter_mut().enumerate() {
                            *out = gr * (w[k] * inv - c * u[k] / (nu * nu));
                        }
                        for (k, out) in db.row_mut(r).iter_mut().enumerate() {
                            *out = gr * (u[k] * inv - c * w[k] / (nw * nw));
                        }
                    }
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::MeanRows(a) => {
                    let rows = val(a).rows();
                    let mut d = Matrix::zeros(rows, g.cols());
                    let scaled = g.scale(1.0 / rows as f64);
                    for r in 0..rows {
                        d.row_mut(r).copy_from_slice(scaled.row(0));
                    }
                    self.accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    self.accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0]));
                }
                Op::Transpose(a) => self.accumulate(&mut grads, *a, g.transpose()),
                Op::GatherRows(a, idx) => {
                    let (r, c) = val(a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, x) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    self.accumulate(&mut grads, *a, d);
                }
                Op::ScatterRows(a, idx, _) => {
                    let d = g.gather_rows(idx)?;
                    self.accumulate(&mut grads, *a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let rows = val(p).rows();
                        let idx: Vec<usize> = (start..start + rows).collect();
                        self.accumulate(&mut grads, *p, g.gather_rows(&idx)?);
                        start += rows;
                    }
                }
                Op::CrossEntropy(a, t) => {
                    let mut probs = val(a).clone();
                    softmax_in_place(probs.row_mut(0));
                    let s = g.data()[0];
                    let row = probs.row_mut(0);
                    row[*t] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= s);
                    self.accumulate(&mut grads, *a, probs);
                }
                Op::Kl(p, q) => {
                    let qv = val(q);
                    let s = g.data()[0];
                    let d: Vec<f64> = p
                        .iter()
                        .zip(qv.row(0))
                        .map(|(&pi, &qi)| if pi > 0.0 { -s * pi / qi } else { 0.0 })
                        .collect();
                    self.accumulate(&mut grads, *q, Matrix::from_raw(1, d.len(), d));
                }
            }
        }

        let by_name = self.params.iter().map(|(n, v)| (n.clone(), *v)).collect();
        Ok(Gradients { grads, by_name })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], target: Var, g: Matrix) {
        if matches!(self.nodes[target.0].op, Op::Constant) {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(e, x)| *e += x),
            slot => *slot = Some(g),
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    by_name: HashMap<String, Var>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.by_name.get(name).and_then(|v| self.get(*v))
    }
}
