use std::rc::Rc;

use super::tensor::{gemm, Tensor};
use super::{NnError, ParamStore, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Shared index list (gather rows, segment ids, class labels).
pub type Indices = Rc<[usize]>;

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Indices),
    SegmentSum(Var, Indices),
    SegmentSoftmax(Var, Indices),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Abs(Var),
    PickCols(Var, Indices),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Gradients of every registered parameter, indexed like the [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn get(&self, id: usize) -> &Tensor {
        &self.0[id]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }
}

/// Records operations in execution order for reverse-mode differentiation.
/// Backward walks the recording in exact reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_shapes: Vec<(usize, usize)>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn check_indices(op: &'static str, indices: &[usize], bound: usize) -> Result<()> {
    match indices.iter().find(|&&i| i >= bound) {
        Some(&index) => Err(NnError::IndexOutOfRange { op, index, bound }),
        None => Ok(()),
    }
}

fn softmax_in_groups(x: &Tensor, group_of_row: impl Fn(usize) -> usize, num_groups: usize) -> Tensor {
    let cols = x.cols();
    let mut max = vec![f64::NEG_INFINITY; num_groups * cols];
    for r in 0..x.rows() {
        let g = group_of_row(r);
        for c in 0..cols {
            let m = &mut max[g * cols + c];
            *m = m.max(x.get(r, c));
        }
    }
    let mut out = Tensor::zeros(x.rows(), cols);
    let mut sum = vec![0.0; num_groups * cols];
    for r in 0..x.rows() {
        let g = group_of_row(r);
        for c in 0..cols {
            let e = (x.get(r, c) - max[g * cols + c]).exp();
            out.set(r, c, e);
            sum[g * cols + c] += e;
        }
    }
    for r in 0..x.rows() {
        let g = group_of_row(r);
        for c in 0..cols {
            out.set(r, c, out.get(r, c) / sum[g * cols + c]);
        }
    }
    out
}

/// `dx = y * (g - sum_group(y * g))`, the softmax Jacobian-vector product.
fn softmax_backward(
    y: &Tensor,
    g: &Tensor,
    group_of_row: impl Fn(usize) -> usize,
    num_groups: usize,
) -> Tensor {
    let cols = y.cols();
    let mut dot = vec![0.0; num_groups * cols];
    for r in 0..y.rows() {
        let grp = group_of_row(r);
        for c in 0..cols {
            dot[grp * cols + c] += y.get(r, c) * g.get(r, c);
        }
    }
    let mut dx = Tensor::zeros(y.rows(), cols);
    for r in 0..y.rows() {
        let grp = group_of_row(r);
        for c in 0..cols {
            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot[grp * cols + c]));
        }
    }
    dx
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by tape op");
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn any_tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Records an untracked constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers every parameter of the store, in store order.
    pub fn params(&mut self, store: &ParamStore) -> Vec<Var> {
        self.param_shapes = store.iter().map(|(_, t)| t.shape()).collect();
        store
            .iter()
            .enumerate()
            .map(|(id, (_, t))| self.push(t.clone(), Op::Param(id), true))
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = Tensor::zeros(ta.rows(), tb.cols());
        gemm(ta, false, tb, false, &mut out);
        let tracked = self.any_tracked(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), tracked))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let tracked = self.any_tracked(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), tracked))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let tracked = self.any_tracked(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), tracked))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let tracked = self.any_tracked(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), tracked))
    }

    /// Adds a `1 x c` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        let tracked = self.any_tracked(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), tracked))
    }

    /// Scales row `i` of `a` by `col[i]` (`col` is `r x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(mismatch("mul_col", ta, tc));
        }
        let mut out = ta.clone();
        for r in 0..out.rows() {
            let s = tc.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        let tracked = self.any_tracked(&[a, col]);
        Ok(self.push(out, Op::MulCol(a, col), tracked))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::Scale(a, s), tracked)
    }

    /// ReLU with derivative 0 at 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::Relu(a), tracked)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::Square(a), tracked)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::Abs(a), tracked)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::SoftmaxRows(a), tracked)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for r in 0..x.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::LogSoftmaxRows(a), tracked)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |v| self.value(*v).rows());
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), self.value(*p)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let tracked = self.any_tracked(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), tracked))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let out = Tensor::vstack(&tensors)?;
        let tracked = self.any_tracked(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), tracked))
    }

    /// Row gather `table[indices[i]]`; used for embedding lookup.
    pub fn gather_rows(&mut self, table: Var, indices: Indices) -> Result<Var> {
        let t = self.value(table);
        check_indices("gather_rows", &indices, t.rows())?;
        let out = t.select_rows(&indices);
        let tracked = self.any_tracked(&[table]);
        Ok(self.push(out, Op::Gather(table, indices), tracked))
    }

    pub fn embedding_lookup(&mut self, table: Var, indices: Indices) -> Result<Var> {
        self.gather_rows(table, indices)
    }

    /// Sums rows sharing a segment id into `num_segments` output rows.
    /// Segment ids may come in any order; empty segments yield zero rows.
    pub fn segment_sum(&mut self, values: Var, segment_ids: Indices, num_segments: usize) -> Result<Var> {
        let x = self.value(values);
        if segment_ids.len() != x.rows() {
            return Err(NnError::ShapeMismatch {
                op: "segment_sum",
                left: x.shape(),
                right: (segment_ids.len(), 1),
            });
        }
        check_indices("segment_sum", &segment_ids, num_segments)?;
        let mut out = Tensor::zeros(num_segments, x.cols());
        for (r, &s) in segment_ids.iter().enumerate() {
            for (o, v) in out.row_mut(s).iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let tracked = self.any_tracked(&[values]);
        Ok(self.push(out, Op::SegmentSum(values, segment_ids), tracked))
    }

    /// Column-wise softmax among rows sharing a segment id.
    pub fn segment_softmax(&mut self, values: Var, segment_ids: Indices, num_segments: usize) -> Result<Var> {
        let x = self.value(values);
        if segment_ids.len() != x.rows() {
            return Err(NnError::ShapeMismatch {
                op: "segment_softmax",
                left: x.shape(),
                right: (segment_ids.len(), 1),
            });
        }
        check_indices("segment_softmax", &segment_ids, num_segments)?;
        let out = softmax_in_groups(x, |r| segment_ids[r], num_segments);
        let tracked = self.any_tracked(&[values]);
        Ok(self.push(out, Op::SegmentSoftmax(values, segment_ids), tracked))
    }

    /// Row sums as an `r x 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::column((0..x.rows()).map(|r| x.row(r).iter().sum()).collect());
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::SumRows(a), tracked)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::Sum(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.len().max(1) as f64;
        let out = Tensor::scalar(x.data().iter().sum::<f64>() / n);
        let tracked = self.any_tracked(&[a]);
        self.push(out, Op::Mean(a), tracked)
    }

    /// Picks `a[i, cols[i]]` for every row, as an `r x 1` column.
    pub fn pick_cols(&mut self, a: Var, cols: Indices) -> Result<Var> {
        let x = self.value(a);
        if cols.len() != x.rows() {
            return Err(NnError::ShapeMismatch {
                op: "pick_cols",
                left: x.shape(),
                right: (cols.len(), 1),
            });
        }
        check_indices("pick_cols", &cols, x.cols())?;
        let out = Tensor::column(cols.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect());
        let tracked = self.any_tracked(&[a]);
        Ok(self.push(out, Op::PickCols(a, cols), tracked))
    }

    /// Mean cross-entropy of row logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: Indices) -> Result<Var> {
        let logp = self.log_softmax_rows(logits);
        let picked = self.pick_cols(logp, labels)?;
        let m = self.mean(picked);
        Ok(self.scale(m, -1.0))
    }

    /// Gradients of a scalar, tracked loss with respect to every registered
    /// parameter. Parameters the loss does not touch get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.tracked {
            return Err(NnError::UntrackedLoss);
        }
        if root.value.shape() != (1, 1) {
            return Err(NnError::NotScalar(root.value.shape()));
        }
        let mut params: Vec<Tensor> = self
            .param_shapes
            .iter()
            .map(|&(r, c)| Tensor::zeros(r, c))
            .collect();
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let mut acc = |v: Var, t: Tensor| {
                if self.nodes[v.0].tracked {
                    match &mut grads[v.0] {
                        Some(existing) => existing.add_assign(&t),
                        slot @ None => *slot = Some(t),
                    }
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.is_tracked(*a) {
                        let mut da = Tensor::zeros(ta.rows(), ta.cols());
                        gemm(&g, false, tb, true, &mut da);
                        acc(*a, da);
                    }
                    if self.is_tracked(*b) {
                        let mut db = Tensor::zeros(tb.rows(), tb.cols());
                        gemm(ta, true, &g, false, &mut db);
                        acc(*b, db);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = zip(&g, tb, |x, y| x * y);
                    let db = zip(&g, ta, |x, y| x * y);
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in dr.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(*row, dr);
                    acc(*a, g);
                }
                Op::MulCol(a, col) => {
                    let (ta, tc) = (self.value(*a), self.value(*col));
                    let mut da = g.clone();
                    let mut dc = Tensor::zeros(tc.rows(), 1);
                    for r in 0..g.rows() {
                        let s = tc.get(r, 0);
                        da.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        let dot: f64 = g.row(r).iter().zip(ta.row(r)).map(|(x, y)| x * y).sum();
                        dc.set(r, 0, dot);
                    }
                    acc(*a, da);
                    acc(*col, dc);
                }
                Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
                Op::Relu(a) => {
                    let d = zip(&g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    acc(*a, d);
                }
                Op::Square(a) => {
                    let d = zip(&g, self.value(*a), |gv, x| 2.0 * x * gv);
                    acc(*a, d);
                }
                Op::Abs(a) => {
                    let d = zip(&g, self.value(*a), |gv, x| gv * sign(x));
                    acc(*a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                        for (c, v) in d.row_mut(r).iter_mut().enumerate() {
                            *v = y.get(r, c) * (*v - dot);
                        }
                    }
                    acc(*a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let gsum: f64 = g.row(r).iter().sum();
                        for (c, v) in d.row_mut(r).iter_mut().enumerate() {
                            *v -= node.value.get(r, c).exp() * gsum;
                        }
                    }
                    acc(*a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(*p).cols();
                        let mut d = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        acc(*p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).rows();
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        offset += rows;
                        acc(*p, g.select_rows(&idx));
                    }
                }
                Op::Gather(table, indices) => {
                    let t = self.value(*table);
                    let mut d = Tensor::zeros(t.rows(), t.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        for (o, v) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*table, d);
                }
                Op::SegmentSum(values, ids) => acc(*values, g.select_rows(ids)),
                Op::SegmentSoftmax(values, ids) => {
                    let num = ids.iter().copied().max().map_or(0, |m| m + 1);
                    acc(*values, softmax_backward(&node.value, &g, |r| ids[r], num));
                }
                Op::SumRows(a) => {
                    let t = self.value(*a);
                    let mut d = Tensor::zeros(t.rows(), t.cols());
                    for r in 0..t.rows() {
                        let gv = g.get(r, 0);
                        d.row_mut(r).iter_mut().for_each(|v| *v = gv);
                    }
                    acc(*a, d);
                }
                Op::Sum(a) => {
                    let t = self.value(*a);
                    acc(*a, Tensor::full(t.rows(), t.cols(), g.item()));
                }
                Op::Mean(a) => {
                    let t = self.value(*a);
                    let n = t.len().max(1) as f64;
                    acc(*a, Tensor::full(t.rows(), t.cols(), g.item() / n));
                }
                Op::PickCols(a, cols) => {
                    let t = self.value(*a);
                    let mut d = Tensor::zeros(t.rows(), t.cols());
                    for (r, &c) in cols.iter().enumerate() {
                        d.set(r, c, g.get(r, 0));
                    }
                    acc(*a, d);
                }
            }
        }
        Ok(Gradients(params))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}
