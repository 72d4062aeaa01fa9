//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Tape`] records every operation of a forward pass as a node in an
//! arena. [`Tape::backward`] walks the arena in reverse and accumulates
//! gradients for every node that depends on a trainable leaf. Parameters
//! enter the tape through [`Tape::param`]; frozen parameters are recorded
//! as constants and therefore never receive a gradient.

use std::collections::HashMap;
use std::rc::Rc;

use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use crate::numerics::NumericsError;
use crate::scalar::{logistic, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Row-compressed sparse matrix with fixed weights (used for message passing).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows<T> {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseRows<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        let d = x.cols();
        let mut out = Tensor::zeros(&[self.rows.len(), d]);
        for (i, row) in self.rows.iter().enumerate() {
            let o = out.row_mut(i);
            for &(j, w) in row {
                for (a, &b) in o.iter_mut().zip(x.row(j)) {
                    *a += w * b;
                }
            }
        }
        out
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Ln(Var),
    Clamp(Var, T, T),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    GatherRows(Var, Rc<Vec<usize>>),
    PickPerRow(Var, Rc<Vec<usize>>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SumAll(Var),
    RowSum(Var),
    SpMM(Rc<SparseRows<T>>, Var),
    Dropout(Var, Rc<Vec<T>>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation graph for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
    bound: HashMap<String, Var>,
    first_non_finite: Option<usize>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            bound: HashMap::new(),
            first_non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        if cfg!(debug_assertions) && self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An anonymous differentiable leaf.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a named parameter. Trainable entries become differentiable
    /// leaves; frozen entries become constants. Binding the same name
    /// twice returns the same node.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var, NumericsError> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let entry = store.entry(name)?;
        let v = self.push(entry.value.clone(), Op::Leaf, entry.trainable);
        if entry.trainable {
            self.params.push((name.to_string(), v));
        }
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Names of the trainable parameters bound so far, in binding order.
    pub fn bound_params(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// `a[m, n] + row[1, n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va.shape(), vr.shape()));
        }
        let mut value = va.clone();
        let r = vr.data().to_vec();
        for i in 0..value.rows() {
            for (x, &b) in value.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a).map(|x| x * k);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a).map(|x| x + k);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(T::zero()));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(logistic);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    /// Natural log; inputs must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Result<Var, NumericsError> {
        if self.value(a).data().iter().any(|&x| x <= T::zero()) {
            return Err(NumericsError::NonFinite("ln of non-positive value".into()));
        }
        let value = self.value(a).map(Float::ln);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Ln(a), rg))
    }

    /// Elementwise clamp into `[lo, hi]`; the gradient is zero outside.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let value = self.value(a).map(|x| x.max(lo).min(hi));
        let rg = self.rg(a);
        self.push(value, Op::Clamp(a, lo, hi), rg)
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for i in 0..value.rows() {
            let p = crate::scalar::softmax(x.row(i));
            value.row_mut(i).copy_from_slice(&p);
        }
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Row-wise softmax restricted to the entries where `allowed` is true
    /// (row-major, same shape as `a`). Disallowed entries get probability 0;
    /// a fully disallowed row is all zeros.
    pub fn masked_softmax_rows(&mut self, a: Var, allowed: &[bool]) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if allowed.len() != x.len() {
            return Err(shape_err("masked_softmax_rows", x.shape(), &[allowed.len()]));
        }
        let cols = x.cols();
        let mut value = Tensor::zeros(x.shape());
        for i in 0..x.rows() {
            let mask = &allowed[i * cols..(i + 1) * cols];
            let row = x.row(i);
            let max = row
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .reduce(T::max);
            let Some(max) = max else { continue };
            let out = value.row_mut(i);
            let mut total = T::zero();
            for j in 0..cols {
                if mask[j] {
                    out[j] = (row[j] - max).exp();
                    total += out[j];
                }
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::Softmax(a), rg))
    }

    /// Row-wise layer normalization with learned `gamma`/`beta` rows.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let n = xv.cols();
        for p in [gamma, beta] {
            let pv = self.value(p);
            if pv.rows() != 1 || pv.cols() != n {
                return Err(shape_err("layer_norm", xv.shape(), pv.shape()));
            }
        }
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let nt = T::lit(n as f64);
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut value = Tensor::zeros(xv.shape());
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / nt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let out = value.row_mut(i);
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                xhat.push(h);
                out[j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Selects rows by index (repeats allowed), e.g. an embedding lookup.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(NumericsError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: x.rows(),
            });
        }
        let cols = x.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let value = Tensor::from_vec(&[idx.len(), cols], data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, Rc::new(idx.to_vec())), rg))
    }

    /// Picks one column per row: `out[i, 0] = a[i, idx[i]]`.
    pub fn pick_per_row(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if idx.len() != x.rows() {
            return Err(shape_err("pick_per_row", x.shape(), &[idx.len()]));
        }
        let mut data = Vec::with_capacity(idx.len());
        for (i, &j) in idx.iter().enumerate() {
            if j >= x.cols() {
                return Err(NumericsError::IndexOutOfRange {
                    op: "pick_per_row",
                    index: j,
                    len: x.cols(),
                });
            }
            data.push(x.at(i, j));
        }
        let value = Tensor::from_vec(&[idx.len(), 1], data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::PickPerRow(a, Rc::new(idx.to_vec())), rg))
    }

    /// Columns `start .. start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(shape_err("slice_cols", x.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for i in 0..x.rows() {
            data.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let value = Tensor::from_vec(&[x.rows(), len], data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err("concat_rows", &[rows, cols], v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::from_vec(&[rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", &[rows, cols], v.shape()));
            }
            cols += v.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::from_vec(&[rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum_all(a);
        self.scale(s, T::one() / T::lit(n as f64))
    }

    /// Sum of each row: `[m, n] -> [m, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data: Vec<T> = (0..x.rows()).map(|i| x.row(i).iter().copied().sum()).collect();
        let value = Tensor::from_vec(&[x.rows(), 1], data).expect("row_sum shape");
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Sparse-dense product `adj · x` with fixed sparse weights.
    pub fn spmm(&mut self, adj: Rc<SparseRows<T>>, x: Var) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        if adj.n_cols != xv.rows() {
            return Err(shape_err("spmm", &[adj.n_rows(), adj.n_cols], xv.shape()));
        }
        let value = adj.apply(xv);
        let rg = self.rg(x);
        Ok(self.push(value, Op::SpMM(adj, x), rg))
    }

    /// Multiplies by a fixed mask (inverted dropout when the mask holds
    /// `0` or `1/(1-p)`).
    pub fn dropout_mask(&mut self, a: Var, mask: Vec<T>) -> Result<Var, NumericsError> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(shape_err("dropout", x.shape(), &[mask.len()]));
        }
        let mut value = x.clone();
        for (v, &m) in value.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout(a, Rc::new(mask)), rg))
    }

    /// Reverse pass from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NumericsError> {
        if let Some(i) = self.first_non_finite {
            return Err(NumericsError::NonFinite(format!("tape node {i} produced a non-finite value")));
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(shape_err("backward", lv.shape(), &[1, 1]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<(), NumericsError> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).transpose().matmul(g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*row) {
                    let mut gr = vec![T::zero(); g.cols()];
                    for r in 0..g.rows() {
                        for (acc, &x) in gr.iter_mut().zip(g.row(r)) {
                            *acc += x;
                        }
                    }
                    self.accumulate(grads, *row, Tensor::row_vector(gr));
                }
            }
            Op::Scale(a, k) => {
                let k = *k;
                self.accumulate(grads, *a, g.map(|x| x * k));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), |x, v| if v > T::zero() { x } else { T::zero() });
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g.zip_map(&node.value, |x, s| x * s * (T::one() - s));
                self.accumulate(grads, *a, ga);
            }
            Op::Square(a) => {
                let two = T::lit(2.0);
                let ga = g.zip_map(self.value(*a), |x, v| x * two * v);
                self.accumulate(grads, *a, ga);
            }
            Op::Ln(a) => {
                let ga = g.zip_map(self.value(*a), |x, v| x / v);
                self.accumulate(grads, *a, ga);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let ga = g.zip_map(self.value(*a), |x, v| if v >= lo && v <= hi { x } else { T::zero() });
                self.accumulate(grads, *a, ga);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for (o, (&p, &q)) in ga.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = g.cols();
                let gam = self.value(*gamma).data();
                if self.rg(*gamma) || self.rg(*beta) {
                    let mut gg = vec![T::zero(); n];
                    let mut gb = vec![T::zero(); n];
                    for r in 0..g.rows() {
                        for j in 0..n {
                            let gv = g.at(r, j);
                            gg[j] += gv * xhat[r * n + j];
                            gb[j] += gv;
                        }
                    }
                    self.accumulate(grads, *gamma, Tensor::row_vector(gg));
                    self.accumulate(grads, *beta, Tensor::row_vector(gb));
                }
                if self.rg(*x) {
                    let nt = T::lit(n as f64);
                    let mut gx = Tensor::zeros(g.shape());
                    for r in 0..g.rows() {
                        let xh = &xhat[r * n..(r + 1) * n];
                        let dxh: Vec<T> = (0..n).map(|j| g.at(r, j) * gam[j]).collect();
                        let s1: T = dxh.iter().copied().sum();
                        let s2: T = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum();
                        let k = inv_std[r] / nt;
                        for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = k * (nt * dxh[j] - s1 - xh[j] * s2);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::GatherRows(a, idx) => {
                let src = self.value(*a);
                let mut ga = Tensor::zeros(src.shape());
                for (r, &j) in idx.iter().enumerate() {
                    for (o, &x) in ga.row_mut(j).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::PickPerRow(a, idx) => {
                let src = self.value(*a);
                let mut ga = Tensor::zeros(src.shape());
                let cols = src.cols();
                for (r, &j) in idx.iter().enumerate() {
                    ga.data_mut()[r * cols + j] += g.data()[r];
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut ga = Tensor::zeros(src.shape());
                let len = g.cols();
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + len].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    self.accumulate(grads, p, Tensor::from_vec(&[rows, cols], slice)?);
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let (rows, cols) = (pv.rows(), pv.cols());
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(grads, p, Tensor::from_vec(&[rows, cols], data)?);
                    }
                    offset += cols;
                }
            }
            Op::SumAll(a) => {
                let gv = g.item();
                self.accumulate(grads, *a, Tensor::filled(self.value(*a).shape(), gv));
            }
            Op::RowSum(a) => {
                let src = self.value(*a);
                let mut ga = Tensor::zeros(src.shape());
                for r in 0..src.rows() {
                    let gv = g.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|o| *o = gv);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SpMM(adj, x) => {
                let src = self.value(*x);
                let mut gx = Tensor::zeros(src.shape());
                for (r, row) in adj.rows.iter().enumerate() {
                    for &(j, w) in row {
                        for (o, &gv) in gx.row_mut(j).iter_mut().zip(g.row(r)) {
                            *o += w * gv;
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Dropout(a, mask) => {
                let mut ga = g.clone();
                for (v, &m) in ga.data_mut().iter_mut().zip(mask.iter()) {
                    *v *= m;
                }
                self.accumulate(grads, *a, ga);
            }
        }
        Ok(())
    }

    /// Gradients of every trainable parameter bound on this tape, in
    /// binding order. Parameters the loss does not depend on get zeros.
    pub fn param_grads(&self, grads: &Gradients<T>) -> Vec<(String, Tensor<T>)> {
        self.params
            .iter()
            .map(|(name, v)| {
                let g = grads
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.value(*v).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

use num_traits::Float;

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(w, w).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap().item(), 6.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let w = tape.leaf(Tensor::scalar(5.0));
        let y = tape.mul(c, w).unwrap();
        let g = tape.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(w).unwrap().item(), 2.0);
    }

    #[test]
    fn masked_softmax_ignores_disallowed() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, 100.0, 2.0], vec![0.0, 0.0, 0.0]]));
        let p = tape
            .masked_softmax_rows(x, &[true, false, true, false, false, false])
            .unwrap();
        let v = tape.value(p);
        assert_eq!(v.at(0, 1), 0.0);
        assert!((v.at(0, 0) + v.at(0, 2) - 1.0).abs() < 1e-12);
        assert_eq!(v.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gather_rows_scatters_gradient() {
        let mut tape = Tape::new();
        let e = tape.leaf(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let g = tape.gather_rows(e, &[1, 1, 0]).unwrap();
        let s = tape.sum_all(g);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(e).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, 2.0]]));
        assert!(tape.backward(x).is_err());
    }
}
