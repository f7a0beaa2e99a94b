use std::collections::HashMap;

use super::{Gradients, Matrix, NumericsError, ParamId, ParamSet};

/// Handle to a record on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// One `out[row] += coef * input[src]` term of a sparse aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub src: usize,
    pub coef: f64,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Affine(Var, f64),
    ConcatCols(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    RowMax(Var, Vec<usize>),
    SqDistance(Var, Var),
    Mean(Vec<Var>),
    Sum(Vec<Var>),
    FrobNormSq(Var),
    Aggregate(Var, Vec<Entry>),
}

#[derive(Debug)]
struct Record {
    op: Op,
    /// `None` for parameter leaves, whose value lives in the `ParamSet`.
    value: Option<Matrix>,
}

/// Append-only record of a forward computation over borrowed parameters.
///
/// Parents always precede children, so a reverse sweep over the records is
/// a valid topological order for backpropagation.
pub struct Tape<'p> {
    params: &'p ParamSet,
    records: Vec<Record>,
    param_vars: HashMap<ParamId, Var>,
}

type OpResult = Result<Var, NumericsError>;

fn mismatch(op: &'static str, left: &Matrix, right: &Matrix) -> NumericsError {
    NumericsError::ShapeMismatch { op, left: left.shape(), right: right.shape() }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { params, records: Vec::new(), param_vars: HashMap::new() }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let rec = &self.records[v.0];
        match (&rec.value, &rec.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.value(*id),
            (None, _) => unreachable!("non-parameter record without a value"),
        }
    }

    /// Parents referenced by record `v`.
    pub fn parents(&self, v: Var) -> Vec<Var> {
        match &self.records[v.0].op {
            Op::Constant | Op::Param(_) => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::SqDistance(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Affine(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Clamp(a, _, _)
            | Op::RowMax(a, _)
            | Op::FrobNormSq(a)
            | Op::Aggregate(a, _) => vec![*a],
            Op::ConcatCols(xs) | Op::Mean(xs) | Op::Sum(xs) => xs.clone(),
        }
    }

    /// Argmax row per column recorded by a `rowmax` record.
    pub fn argmax(&self, v: Var) -> Option<&[usize]> {
        match &self.records[v.0].op {
            Op::RowMax(_, idx) => Some(idx),
            _ => None,
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.records.push(Record { op, value: Some(value) });
        Var(self.records.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Constant, value)
    }

    /// Leaf for a parameter. Repeated calls for the same id share one record.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.records.push(Record { op: Op::Param(id), value: None });
        let v = Var(self.records.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(mismatch("matmul", va, vb));
        }
        let out = va.matmul(vb);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va, vb));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Adds a `1 × c` row vector to every row of an `r × c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> OpResult {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(mismatch("add_row", va, vr));
        }
        let mut out = va.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(vr.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddRow(a, row), out))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(Op::Scale(a, s), out)
    }

    /// `s · a + t`, elementwise.
    pub fn affine(&mut self, a: Var, s: f64, t: f64) -> Var {
        let out = self.value(a).map(|v| s * v + t);
        self.push(Op::Affine(a, s), out)
    }

    /// Horizontal concatenation of matrices with equal row counts, e.g. a
    /// 2-wide and a 3-wide row vector give a 5-wide row vector.
    pub fn concat_cols(&mut self, xs: &[Var]) -> OpResult {
        let first = match xs.first() {
            Some(&v) => self.value(v),
            None => return Err(NumericsError::Empty { op: "concat_cols" }),
        };
        let rows = first.rows();
        let mut cols = 0;
        for &x in xs {
            let vx = self.value(x);
            if vx.rows() != rows {
                return Err(mismatch("concat_cols", first, vx));
            }
            cols += vx.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for &x in xs {
                let vx = self.value(x);
                out.row_mut(i)[offset..offset + vx.cols()].copy_from_slice(vx.row(i));
                offset += vx.cols();
            }
        }
        Ok(self.push(Op::ConcatCols(xs.to_vec()), out))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid(a), out)
    }

    pub fn log(&mut self, a: Var) -> OpResult {
        let va = self.value(a);
        if let Some(&bad) = va.as_slice().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(NumericsError::Domain { op: "log", value: bad });
        }
        let out = va.map(f64::ln);
        Ok(self.push(Op::Log(a), out))
    }

    /// Elementwise clamp into `[lo, hi]`; gradient passes only where the
    /// input lies strictly inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), out)
    }

    /// Columnwise maximum over rows, giving a `1 × c` row vector. Ties go to
    /// the lowest row index.
    pub fn rowmax(&mut self, a: Var) -> OpResult {
        let va = self.value(a);
        if va.rows() == 0 {
            return Err(NumericsError::Empty { op: "rowmax" });
        }
        let mut out = Matrix::zeros(1, va.cols());
        let mut argmax = vec![0usize; va.cols()];
        for c in 0..va.cols() {
            let mut best = va[(0, c)];
            for r in 1..va.rows() {
                if va[(r, c)] > best {
                    best = va[(r, c)];
                    argmax[c] = r;
                }
            }
            out[(0, c)] = best;
        }
        Ok(self.push(Op::RowMax(a, argmax), out))
    }

    /// Squared Euclidean distance between equally shaped operands.
    pub fn sq_distance(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("sq_distance", va, vb));
        }
        let d: f64 = va.as_slice().iter().zip(vb.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok(self.push(Op::SqDistance(a, b), Matrix::scalar(d)))
    }

    fn check_scalars(&self, op: &'static str, xs: &[Var]) -> Result<(), NumericsError> {
        if xs.is_empty() {
            return Err(NumericsError::Empty { op });
        }
        for &x in xs {
            let (r, c) = self.value(x).shape();
            if (r, c) != (1, 1) {
                return Err(NumericsError::NotScalar { op, rows: r, cols: c });
            }
        }
        Ok(())
    }

    pub fn mean(&mut self, xs: &[Var]) -> OpResult {
        self.check_scalars("mean", xs)?;
        let total: f64 = xs.iter().map(|&x| self.value(x).item()).sum();
        Ok(self.push(Op::Mean(xs.to_vec()), Matrix::scalar(total / xs.len() as f64)))
    }

    pub fn sum(&mut self, xs: &[Var]) -> OpResult {
        self.check_scalars("sum", xs)?;
        let total: f64 = xs.iter().map(|&x| self.value(x).item()).sum();
        Ok(self.push(Op::Sum(xs.to_vec()), Matrix::scalar(total)))
    }

    pub fn frob_norm_sq(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).frobenius_sq());
        self.push(Op::FrobNormSq(a), out)
    }

    /// Sparse weighted gather-scatter: `out[e.row] += e.coef * input[e.src]`
    /// over an `out_rows × c` zero matrix. Entries are applied in order.
    pub fn aggregate(&mut self, input: Var, entries: Vec<Entry>, out_rows: usize) -> OpResult {
        let vi = self.value(input);
        let cols = vi.cols();
        let mut out = Matrix::zeros(out_rows, cols);
        for e in &entries {
            if e.src >= vi.rows() || e.row >= out_rows {
                return Err(NumericsError::IndexOutOfRange {
                    op: "aggregate",
                    index: e.src.max(e.row),
                    bound: vi.rows().min(out_rows),
                });
            }
            let src = &vi.as_slice()[e.src * cols..(e.src + 1) * cols];
            for (o, &x) in out.row_mut(e.row).iter_mut().zip(src) {
                *o += e.coef * x;
            }
        }
        Ok(self.push(Op::Aggregate(input, entries), out))
    }

    /// Reverse sweep from a scalar record, returning gradients for every
    /// parameter reachable from it.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let (r, c) = self.value(loss).shape();
        if (r, c) != (1, 1) {
            return Err(NumericsError::NonScalarLoss { rows: r, cols: c });
        }
        let mut grads = Gradients::empty(self.params.len());
        let mut adj: Vec<Option<Matrix>> = (0..self.records.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for k in (0..=loss.0).rev() {
            let Some(g) = adj[k].take() else { continue };
            let out = self.records[k].value.as_ref();
            match &self.records[k].op {
                Op::Constant => {}
                Op::Param(id) => grads.add_to(*id, g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_transposed(self.value(*b));
                    let gb = self.value(*a).transposed_matmul(&g);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gr.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *row, gr);
                    accumulate(&mut adj, *a, g);
                }
                Op::Scale(a, s) | Op::Affine(a, s) => {
                    let s = *s;
                    accumulate(&mut adj, *a, g.map(|v| v * s));
                }
                Op::ConcatCols(xs) => {
                    let mut offset = 0;
                    for &x in xs {
                        let w = self.value(x).cols();
                        let mut gx = Matrix::zeros(g.rows(), w);
                        for i in 0..g.rows() {
                            gx.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        offset += w;
                        accumulate(&mut adj, x, gx);
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let gx = zip_map(&g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    accumulate(&mut adj, *a, gx);
                }
                Op::Sigmoid(a) => {
                    let y = out.expect("sigmoid value");
                    let gx = zip_map(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    accumulate(&mut adj, *a, gx);
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    accumulate(&mut adj, *a, zip_map(&g, x, |gv, xv| gv / xv));
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let x = self.value(*a);
                    let gx = zip_map(&g, x, |gv, xv| if xv > lo && xv < hi { gv } else { 0.0 });
                    accumulate(&mut adj, *a, gx);
                }
                Op::RowMax(a, argmax) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    for (c, &r) in argmax.iter().enumerate() {
                        gx[(r, c)] = g[(0, c)];
                    }
                    accumulate(&mut adj, *a, gx);
                }
                Op::SqDistance(a, b) => {
                    let s = g.item();
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = zip_map(va, vb, |x, y| 2.0 * s * (x - y));
                    let gb = ga.map(|v| -v);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Mean(xs) => {
                    let share = g.item() / xs.len() as f64;
                    for &x in xs {
                        accumulate(&mut adj, x, Matrix::scalar(share));
                    }
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        accumulate(&mut adj, x, Matrix::scalar(g.item()));
                    }
                }
                Op::FrobNormSq(a) => {
                    let s = g.item();
                    accumulate(&mut adj, *a, self.value(*a).map(|v| 2.0 * s * v));
                }
                Op::Aggregate(input, entries) => {
                    let (rows, cols) = self.value(*input).shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    for e in entries {
                        let src_row = g.row(e.row);
                        for (o, &v) in gx.row_mut(e.src).iter_mut().zip(src_row) {
                            *o += e.coef * v;
                        }
                    }
                    accumulate(&mut adj, *input, gx);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}
