//! Reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves are either
//! constants or parameters; [`Tape::backward`] returns the gradient of a
//! `1 × 1` output with respect to every node that depends on a parameter.

use super::ops::{gemm_nn, gemm_nt, gemm_tn, softmax_masked_into, Activation};
use super::{Scalar, Tensor};
use crate::error::{Result, TsamError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    OuterSum(Var, Var),
    Scale(Var, S),
    Act(Var, Activation),
    SoftmaxRows(Var),
    LayerNormRows(Var, Vec<S>),
    StackRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Row(Var, usize),
    Reshape(Var),
    SumSquares(Var),
    SumAll(Vec<Var>),
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    tracked: bool,
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let t = self.value(v);
        [t.rows(), t.cols()]
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn mat(rows: usize, cols: usize, data: Vec<S>) -> Tensor<S> {
        Tensor::matrix(rows, cols, data).expect("shape computed from operands")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, k], [k2, n]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(TsamError::dim("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![S::zero(); m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Self::mat(m, n, out), Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, k], [n, k2]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(TsamError::dim("matmul_nt", &[m, k], &[n, k2]));
        }
        let mut out = vec![S::zero(); m * n];
        gemm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Self::mat(m, n, out), Op::MatMulNt(a, b), &[a, b]))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(TsamError::dim(name, &self.shape(a), &self.shape(b)));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Self::mat(ta.rows(), ta.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the `1 × n` row `b` to every row of the `m × n` matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, n], [one, n2]) = (self.shape(a), self.shape(b));
        if one != 1 || n != n2 {
            return Err(TsamError::dim("add_row", &[m, n], &[one, n2]));
        }
        let bias = self.value(b).data().to_vec();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(&bias).map(|(&x, &y)| x + y).collect::<Vec<_>>())
            .collect();
        Ok(self.push(Self::mat(m, n, data), Op::AddRow(a, b), &[a, b]))
    }

    /// `out[i][j] = col[i] + row[j]` for an `m × 1` column and a `1 × n` row.
    pub fn outer_sum(&mut self, col: Var, row: Var) -> Result<Var> {
        let ([m, c1], [r1, n]) = (self.shape(col), self.shape(row));
        if c1 != 1 || r1 != 1 {
            return Err(TsamError::dim("outer_sum", &[m, c1], &[r1, n]));
        }
        let (cv, rv) = (self.value(col).data(), self.value(row).data());
        let v = Tensor::from_fn(m, n, |i, j| cv[i] + rv[j]);
        Ok(self.push(v, Op::OuterSum(col, row), &[col, row]))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn act(&mut self, a: Var, f: Activation) -> Var {
        let v = f.on(self.value(a));
        self.push(v, Op::Act(a, f), &[a])
    }

    /// Row-wise softmax restricted to `allowed` (row-major, same shape as `a`).
    pub fn softmax_rows(&mut self, a: Var, allowed: &[bool]) -> Result<Var> {
        let [m, n] = self.shape(a);
        if allowed.len() != m * n {
            return Err(TsamError::dim("softmax_rows", &[m, n], &[allowed.len()]));
        }
        let mut out = vec![S::zero(); m * n];
        let logits = self.value(a).data();
        for i in 0..m {
            let r = i * n..(i + 1) * n;
            softmax_masked_into(&logits[r.clone()], &allowed[r.clone()], &mut out[r])?;
        }
        Ok(self.push(Self::mat(m, n, out), Op::SoftmaxRows(a), &[a]))
    }

    /// Layer normalization of every row independently.
    pub fn layer_norm_rows(&mut self, a: Var, eps: S) -> Var {
        let [m, n] = self.shape(a);
        let nf = S::of(n as f64);
        let mut out = Vec::with_capacity(m * n);
        let mut inv = Vec::with_capacity(m);
        for row in self.value(a).data().chunks(n) {
            let mean = row.iter().copied().sum::<S>() / nf;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / nf;
            let s = (var + eps).sqrt().recip();
            out.extend(row.iter().map(|&x| (x - mean) * s));
            inv.push(s);
        }
        self.push(Self::mat(m, n, out), Op::LayerNormRows(a, inv), &[a])
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let [r, c] = self.shape(p);
            if c != n {
                return Err(TsamError::dim("stack_rows", &[m, n], &[r, c]));
            }
            m += r;
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Self::mat(m, n, data), Op::StackRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p)[1]).collect();
        for &p in parts {
            if self.shape(p)[0] != m {
                return Err(TsamError::dim("concat_cols", &[m], &self.shape(p)));
            }
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        Ok(self.push(Self::mat(m, n, data), Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Row `i` as a `1 × n` matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let v = Tensor::row(self.value(a).row_slice(i).to_vec());
        self.push(v, Op::Row(a, i), &[a])
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(a).reshape(&[rows, cols])?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    /// `1 × 1` sum of squared entries.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        self.push(Tensor::row(vec![s]), Op::SumSquares(a), &[a])
    }

    /// Element-wise sum of equally shaped operands.
    pub fn sum_all(&mut self, parts: &[Var]) -> Result<Var> {
        let mut acc = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            acc = acc.add(self.value(p))?;
        }
        Ok(self.push(acc, Op::SumAll(parts.to_vec()), parts))
    }

    /// Gradients of the scalar `output` with respect to every tracked node.
    pub fn backward(&self, output: Var) -> Gradients<S> {
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let out = &self.nodes[output.0].value;
        grads[output.0] = Some(Tensor::filled(out.shape(), S::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn like(&self, v: Var, data: Vec<S>) -> Tensor<S> {
        let t = &self.nodes[v.0].value;
        Tensor::new(t.shape().to_vec(), data).expect("gradient matches operand shape")
    }

    fn propagate(&self, node: &Node<S>, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ([m, k], [_, n]) = (self.shape(*a), self.shape(*b));
                if self.nodes[a.0].tracked {
                    let mut da = vec![S::zero(); m * k];
                    gemm_nt(gd, self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(grads, *a, Self::mat(m, k, da));
                }
                if self.nodes[b.0].tracked {
                    let mut db = vec![S::zero(); k * n];
                    gemm_tn(self.value(*a).data(), gd, &mut db, k, m, n);
                    self.accumulate(grads, *b, Self::mat(k, n, db));
                }
            }
            Op::MatMulNt(a, b) => {
                let ([m, k], [n, _]) = (self.shape(*a), self.shape(*b));
                if self.nodes[a.0].tracked {
                    let mut da = vec![S::zero(); m * k];
                    gemm_nn(gd, self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(grads, *a, Self::mat(m, k, da));
                }
                if self.nodes[b.0].tracked {
                    let mut db = vec![S::zero(); n * k];
                    gemm_tn(gd, self.value(*a).data(), &mut db, n, m, k);
                    self.accumulate(grads, *b, Self::mat(n, k, db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, self.like(*a, gd.to_vec()));
                self.accumulate(grads, *b, self.like(*b, gd.to_vec()));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, self.like(*a, gd.to_vec()));
                self.accumulate(grads, *b, self.like(*b, gd.iter().map(|&x| -x).collect()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let da = gd.iter().zip(vb).map(|(&x, &y)| x * y).collect();
                let db = gd.iter().zip(va).map(|(&x, &y)| x * y).collect();
                self.accumulate(grads, *a, self.like(*a, da));
                self.accumulate(grads, *b, self.like(*b, db));
            }
            Op::AddRow(a, b) => {
                let n = self.shape(*b)[1];
                let mut db = vec![S::zero(); n];
                for row in gd.chunks(n) {
                    for (d, &x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                self.accumulate(grads, *a, self.like(*a, gd.to_vec()));
                self.accumulate(grads, *b, self.like(*b, db));
            }
            Op::OuterSum(col, row) => {
                let [m, n] = [g.rows(), g.cols()];
                let mut dc = vec![S::zero(); m];
                let mut dr = vec![S::zero(); n];
                for i in 0..m {
                    for j in 0..n {
                        let x = gd[i * n + j];
                        dc[i] += x;
                        dr[j] += x;
                    }
                }
                self.accumulate(grads, *col, self.like(*col, dc));
                self.accumulate(grads, *row, self.like(*row, dr));
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, self.like(*a, gd.iter().map(|&x| x * *c).collect()));
            }
            Op::Act(a, f) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let d = gd
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&gi, (&xi, &yi))| gi * f.derivative(xi, yi))
                    .collect();
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::SoftmaxRows(a) => {
                let n = g.cols();
                let y = node.value.data();
                let mut d = vec![S::zero(); y.len()];
                for ((drow, yrow), grow) in d.chunks_mut(n).zip(y.chunks(n)).zip(gd.chunks(n)) {
                    let dot: S = yrow.iter().zip(grow).map(|(&p, &q)| p * q).sum();
                    for ((o, &p), &q) in drow.iter_mut().zip(yrow).zip(grow) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::LayerNormRows(a, inv) => {
                let n = g.cols();
                let nf = S::of(n as f64);
                let y = node.value.data();
                let mut d = vec![S::zero(); y.len()];
                for (((drow, yrow), grow), &s) in d.chunks_mut(n).zip(y.chunks(n)).zip(gd.chunks(n)).zip(inv) {
                    let mean_g = grow.iter().copied().sum::<S>() / nf;
                    let mean_gy = grow.iter().zip(yrow).map(|(&p, &q)| p * q).sum::<S>() / nf;
                    for ((o, &yi), &gi) in drow.iter_mut().zip(yrow).zip(grow) {
                        *o = s * (gi - mean_g - yi * mean_gy);
                    }
                }
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate(grads, p, self.like(p, gd[offset..offset + len].to_vec()));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (g.rows(), g.cols());
                let mut col = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    let mut d = Vec::with_capacity(m * w);
                    for i in 0..m {
                        d.extend_from_slice(&gd[i * n + col..i * n + col + w]);
                    }
                    self.accumulate(grads, p, self.like(p, d));
                    col += w;
                }
            }
            Op::Row(a, i) => {
                let [m, n] = self.shape(*a);
                let mut d = vec![S::zero(); m * n];
                d[i * n..(i + 1) * n].copy_from_slice(gd);
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, self.like(*a, gd.to_vec()));
            }
            Op::SumSquares(a) => {
                let two_g = S::of(2.0) * gd[0];
                let d = self.value(*a).data().iter().map(|&x| two_g * x).collect();
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::SumAll(parts) => {
                for &p in parts {
                    self.accumulate(grads, p, self.like(p, gd.to_vec()));
                }
            }
        }
    }
}

pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// `None` when the output does not depend on `v`.
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
