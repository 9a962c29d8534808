//! Reverse-mode differentiation over a recorded computation.
//!
//! Every operation appends a node to the [`Tape`]; node ids are therefore a
//! topological order and [`Tape::backward`] walks them once, from the root
//! down, accumulating gradients additively where a value feeds several uses.

use std::cell::RefCell;
use std::sync::Arc;

use super::matrix::{gemm, shape_error, softmax_in_place, GemmArg, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize, Broadcast),
    Sub(usize, usize, Broadcast),
    Mul(usize, usize, Broadcast),
    Div(usize, usize, Broadcast),
    MatMul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Transpose(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Log(usize),
    Exp(usize),
    Powf(usize, f64),
    Clamp(usize, f64, f64),
    SumAll(usize),
    MeanAll(usize),
    RowSum(usize),
    ColSum(usize),
    ColMean(usize),
    L2NormalizeRows(usize),
    SoftmaxRows(usize),
    /// Masked entries are exactly zero, so the plain softmax backward applies.
    MaskedSoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Pick(usize, Vec<usize>),
}

/// How the right operand of a binary elementwise op is expanded to the left
/// operand's shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    None,
    /// 1 x C operand repeated down the rows.
    Row,
    /// R x 1 operand repeated across the columns.
    Col,
    /// 1 x 1 operand.
    Scalar,
}

struct Node {
    value: Arc<Matrix>,
    op: Op,
}

/// Arena of recorded values and the operations that produced them.
///
/// A tape is confined to one thread from the forward pass through backward.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

/// Gradients of a scalar root with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Matrix> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros of its shape when the root does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Matrix {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.id];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf (parameter or constant input).
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.leaf_shared(Arc::new(value))
    }

    pub fn leaf_shared(&self, value: Arc<Matrix>) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    fn push(&self, value: Arc<Matrix>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Arc<Matrix> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Back-propagates from a 1x1 root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(root.tape, self), "root belongs to another tape");
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got {}x{}",
                root_value.rows(),
                root_value.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[root.id] = Some(Matrix::scalar(1.0));
        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            propagate(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums a full-shape gradient down to the operand's broadcast shape.
fn reduce_broadcast(g: &Matrix, bc: Broadcast) -> Matrix {
    match bc {
        Broadcast::None => g.clone(),
        Broadcast::Scalar => Matrix::scalar(g.sum()),
        Broadcast::Row => col_sums(g),
        Broadcast::Col => row_sums(g),
    }
}

fn col_sums(m: &Matrix) -> Matrix {
    let mut out = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Matrix::from_raw(1, m.cols(), out)
}

fn row_sums(m: &Matrix) -> Matrix {
    Matrix::from_raw(m.rows(), 1, m.row_iter().map(|r| r.iter().sum()).collect())
}

/// Value of the broadcast operand at (r, c) of the full shape.
#[inline]
fn bval(b: &Matrix, bc: Broadcast, r: usize, c: usize) -> f64 {
    match bc {
        Broadcast::None => b.get(r, c),
        Broadcast::Row => b.get(0, c),
        Broadcast::Col => b.get(r, 0),
        Broadcast::Scalar => b.get(0, 0),
    }
}

fn elementwise_grad(
    g: &Matrix,
    a: &Matrix,
    b: &Matrix,
    bc: Broadcast,
    da_f: impl Fn(f64, f64) -> f64,
    db_f: impl Fn(f64, f64) -> f64,
) -> (Matrix, Matrix) {
    let (rows, cols) = a.shape();
    let mut da = vec![0.0; rows * cols];
    let mut db_full = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let av = a.data()[i];
            let bv = bval(b, bc, r, c);
            da[i] = g.data()[i] * da_f(av, bv);
            db_full[i] = g.data()[i] * db_f(av, bv);
        }
    }
    let db = reduce_broadcast(&Matrix::from_raw(rows, cols, db_full), bc);
    (Matrix::from_raw(rows, cols, da), db)
}

fn propagate(nodes: &[Node], node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let val = |id: usize| -> &Matrix { &nodes[id].value };
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b, bc) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, reduce_broadcast(g, *bc));
        }
        Op::Sub(a, b, bc) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, reduce_broadcast(&g.scale(-1.0), *bc));
        }
        Op::Mul(a, b, bc) => {
            let (da, db) = elementwise_grad(g, val(*a), val(*b), *bc, |_, y| y, |x, _| x);
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::Div(a, b, bc) => {
            let (da, db) = elementwise_grad(
                g,
                val(*a),
                val(*b),
                *bc,
                |_, y| 1.0 / y,
                |x, y| -x / (y * y),
            );
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::MatMul(a, b) => {
            let (am, bm) = (val(*a), val(*b));
            let mut da = Matrix::zeros(am.rows(), am.cols());
            gemm(GemmArg::of(g, false), GemmArg::of(bm, true), &mut da, 0.0);
            let mut db = Matrix::zeros(bm.rows(), bm.cols());
            gemm(GemmArg::of(am, true), GemmArg::of(g, false), &mut db, 0.0);
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
        Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
        Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
        Op::ConcatRows(parts) => {
            let mut start = 0;
            for &p in parts {
                let rows = val(p).rows();
                let idx: Vec<usize> = (start..start + rows).collect();
                accumulate(grads, p, g.select_rows(&idx));
                start += rows;
            }
        }
        Op::ConcatCols(parts) => {
            let mut start = 0;
            for &p in parts {
                let cols = val(p).cols();
                accumulate(grads, p, slice_cols(g, start, cols));
                start += cols;
            }
        }
        Op::SliceCols(a, start) => {
            let am = val(*a);
            let mut da = Matrix::zeros(am.rows(), am.cols());
            let w = g.cols();
            for r in 0..am.rows() {
                da.data_mut()[r * am.cols() + start..r * am.cols() + start + w]
                    .copy_from_slice(g.row(r));
            }
            accumulate(grads, *a, da);
        }
        Op::GatherRows(a, idx) => {
            let am = val(*a);
            let mut da = Matrix::zeros(am.rows(), am.cols());
            let cols = am.cols();
            for (k, &i) in idx.iter().enumerate() {
                let dst = &mut da.data_mut()[i * cols..(i + 1) * cols];
                for (d, v) in dst.iter_mut().zip(g.row(k)) {
                    *d += v;
                }
            }
            accumulate(grads, *a, da);
        }
        Op::LeakyRelu(a, slope) => {
            let am = val(*a);
            let data = g
                .data()
                .iter()
                .zip(am.data())
                .map(|(gv, x)| if *x > 0.0 { *gv } else { gv * slope })
                .collect();
            accumulate(grads, *a, Matrix::from_raw(am.rows(), am.cols(), data));
        }
        Op::Sigmoid(a) => {
            let data = g
                .data()
                .iter()
                .zip(out.data())
                .map(|(gv, s)| gv * s * (1.0 - s))
                .collect();
            accumulate(grads, *a, Matrix::from_raw(out.rows(), out.cols(), data));
        }
        Op::Log(a) => {
            let am = val(*a);
            let data = g.data().iter().zip(am.data()).map(|(gv, x)| gv / x).collect();
            accumulate(grads, *a, Matrix::from_raw(am.rows(), am.cols(), data));
        }
        Op::Exp(a) => {
            let data = g.data().iter().zip(out.data()).map(|(gv, e)| gv * e).collect();
            accumulate(grads, *a, Matrix::from_raw(out.rows(), out.cols(), data));
        }
        Op::Powf(a, p) => {
            let am = val(*a);
            let data = g
                .data()
                .iter()
                .zip(am.data())
                .map(|(gv, x)| gv * p * x.powf(p - 1.0))
                .collect();
            accumulate(grads, *a, Matrix::from_raw(am.rows(), am.cols(), data));
        }
        Op::Clamp(a, lo, hi) => {
            let am = val(*a);
            let data = g
                .data()
                .iter()
                .zip(am.data())
                .map(|(gv, x)| if x < lo || x > hi { 0.0 } else { *gv })
                .collect();
            accumulate(grads, *a, Matrix::from_raw(am.rows(), am.cols(), data));
        }
        Op::SumAll(a) => {
            let (r, c) = val(*a).shape();
            accumulate(grads, *a, Matrix::filled(r, c, g.get(0, 0)));
        }
        Op::MeanAll(a) => {
            let (r, c) = val(*a).shape();
            accumulate(grads, *a, Matrix::filled(r, c, g.get(0, 0) / (r * c) as f64));
        }
        Op::RowSum(a) => {
            let (r, c) = val(*a).shape();
            let data = (0..r).flat_map(|i| std::iter::repeat_n(g.get(i, 0), c)).collect();
            accumulate(grads, *a, Matrix::from_raw(r, c, data));
        }
        Op::ColSum(a) | Op::ColMean(a) => {
            let (r, c) = val(*a).shape();
            let scale = if matches!(node.op, Op::ColMean(_)) { 1.0 / r as f64 } else { 1.0 };
            let row: Vec<f64> = g.row(0).iter().map(|v| v * scale).collect();
            let data = (0..r).flat_map(|_| row.iter().copied()).collect();
            accumulate(grads, *a, Matrix::from_raw(r, c, data));
        }
        Op::L2NormalizeRows(a) => {
            // y = x / |x|;  dx = (g - y (g . y)) / |x|
            let am = val(*a);
            let cols = am.cols();
            let mut data = vec![0.0; am.len()];
            for r in 0..am.rows() {
                let x = am.row(r);
                let y = out.row(r);
                let gr = g.row(r);
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                for c in 0..cols {
                    data[r * cols + c] = (gr[c] - y[c] * dot) / norm;
                }
            }
            accumulate(grads, *a, Matrix::from_raw(am.rows(), cols, data));
        }
        Op::SoftmaxRows(a) | Op::MaskedSoftmaxRows(a) => {
            let cols = out.cols();
            let mut data = vec![0.0; out.len()];
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                for c in 0..cols {
                    data[r * cols + c] = y[c] * (gr[c] - dot);
                }
            }
            accumulate(grads, *a, Matrix::from_raw(out.rows(), cols, data));
        }
        Op::LogSoftmaxRows(a) => {
            let cols = out.cols();
            let mut data = vec![0.0; out.len()];
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let total: f64 = gr.iter().sum();
                for c in 0..cols {
                    data[r * cols + c] = gr[c] - y[c].exp() * total;
                }
            }
            accumulate(grads, *a, Matrix::from_raw(out.rows(), cols, data));
        }
        Op::Pick(a, cols_idx) => {
            let am = val(*a);
            let mut da = Matrix::zeros(am.rows(), am.cols());
            for (r, &c) in cols_idx.iter().enumerate() {
                da.data_mut()[r * am.cols() + c] = g.get(r, 0);
            }
            accumulate(grads, *a, da);
        }
    }
}

fn slice_cols(m: &Matrix, start: usize, len: usize) -> Matrix {
    let mut data = Vec::with_capacity(m.rows() * len);
    for r in 0..m.rows() {
        data.extend_from_slice(&m.row(r)[start..start + len]);
    }
    Matrix::from_raw(m.rows(), len, data)
}

fn finite(rows: usize, cols: usize, data: Vec<f64>, op: &str) -> Result<Matrix> {
    Matrix::new(rows, cols, data).map_err(|e| match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("{op}: {msg}")),
        other => other,
    })
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Matrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    /// Records a constant on the same tape (no gradient is read back for it).
    pub fn constant(&self, value: Matrix) -> Var<'t> {
        self.tape.leaf(value)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "operands on different tapes");
    }

    fn unary(&self, value: Matrix, op: Op) -> Var<'t> {
        self.tape.push(Arc::new(value), op)
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize, Broadcast) -> Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let bc = if a.shape() == b.shape() {
            Broadcast::None
        } else if b.shape() == (1, 1) {
            Broadcast::Scalar
        } else if b.rows() == 1 && b.cols() == a.cols() {
            Broadcast::Row
        } else if b.cols() == 1 && b.rows() == a.rows() {
            Broadcast::Col
        } else {
            return Err(shape_error(name, &a, &b));
        };
        let (rows, cols) = a.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(a.get(r, c), bval(&b, bc, r, c)));
            }
        }
        let value = finite(rows, cols, data, name)?;
        Ok(self.unary(value, make(self.id, other.id, bc)))
    }

    /// Elementwise sum; `other` may be a matching matrix, a 1xC row, an Rx1
    /// column or a 1x1 scalar.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "elementwise_mul", |a, b| a * b, Op::Mul)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", |a, b| a / b, Op::Div)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = self.value().matmul(&other.value())?;
        Ok(self.unary(value, Op::MatMul(self.id, other.id)))
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>> {
        let a = self.value();
        let value = finite(a.rows(), a.cols(), a.data().iter().map(|v| v * s).collect(), "scale")?;
        Ok(self.unary(value, Op::Scale(self.id, s)))
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'t>> {
        let a = self.value();
        let value = finite(
            a.rows(),
            a.cols(),
            a.data().iter().map(|v| v + s).collect(),
            "add_scalar",
        )?;
        Ok(self.unary(value, Op::AddScalar(self.id)))
    }

    pub fn transpose(self) -> Var<'t> {
        let value = self.value().transpose();
        self.unary(value, Op::Transpose(self.id))
    }

    pub fn concat_rows(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of zero parts".into()))?;
        let values: Vec<Arc<Matrix>> = parts.iter().map(Var::value).collect();
        let refs: Vec<&Matrix> = values.iter().map(|v| v.as_ref()).collect();
        let value = Matrix::concat_rows(&refs)?;
        Ok(first.unary(value, Op::ConcatRows(parts.iter().map(|p| p.id).collect())))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of zero parts".into()))?;
        let values: Vec<Arc<Matrix>> = parts.iter().map(Var::value).collect();
        let rows = values[0].rows();
        if let Some(bad) = values.iter().find(|v| v.rows() != rows) {
            return Err(shape_error("concat_cols", &values[0], bad));
        }
        let cols: usize = values.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row(r));
            }
        }
        let value = Matrix::from_raw(rows, cols, data);
        Ok(first.unary(value, Op::ConcatCols(parts.iter().map(|p| p.id).collect())))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        if start + len > a.cols() {
            return Err(Error::Dimension(format!(
                "slice_cols {start}..{} out of range for {}x{}",
                start + len,
                a.rows(),
                a.cols()
            )));
        }
        Ok(self.unary(slice_cols(&a, start, len), Op::SliceCols(self.id, start)))
    }

    /// Copies the listed rows (repeats allowed); gradients scatter-add back.
    pub fn gather_rows(self, indices: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.rows()) {
            return Err(Error::Dimension(format!(
                "gather_rows index {bad} out of range for {} rows",
                a.rows()
            )));
        }
        Ok(self.unary(a.select_rows(indices), Op::GatherRows(self.id, indices.to_vec())))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let value = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(value, Op::LeakyRelu(self.id, slope))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let value = self.value().map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.unary(value, Op::Sigmoid(self.id))
    }

    pub fn log(self) -> Result<Var<'t>> {
        let a = self.value();
        if let Some(v) = a.data().iter().find(|v| **v <= 0.0) {
            return Err(Error::NonFinite(format!("log of non-positive value {v}")));
        }
        Ok(self.unary(a.map(f64::ln), Op::Log(self.id)))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        let a = self.value();
        let value = finite(a.rows(), a.cols(), a.data().iter().map(|v| v.exp()).collect(), "exp")?;
        Ok(self.unary(value, Op::Exp(self.id)))
    }

    /// Elementwise `x^p`; inputs must be positive unless `p` is a whole number.
    pub fn powf(self, p: f64) -> Result<Var<'t>> {
        let a = self.value();
        let value = finite(
            a.rows(),
            a.cols(),
            a.data().iter().map(|v| v.powf(p)).collect(),
            "powf",
        )?;
        Ok(self.unary(value, Op::Powf(self.id, p)))
    }

    /// Elementwise clamp; gradient is zero where the input lies outside `[lo, hi]`.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let value = self.value().map(|x| x.clamp(lo, hi));
        self.unary(value, Op::Clamp(self.id, lo, hi))
    }

    pub fn sum(self) -> Var<'t> {
        let value = Matrix::scalar(self.value().sum());
        self.unary(value, Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let a = self.value();
        let value = Matrix::scalar(a.sum() / a.len() as f64);
        self.unary(value, Op::MeanAll(self.id))
    }

    /// Sum across each row: R x C -> R x 1.
    pub fn row_sum(self) -> Var<'t> {
        let value = row_sums(&self.value());
        self.unary(value, Op::RowSum(self.id))
    }

    /// Sum down each column: R x C -> 1 x C.
    pub fn col_sum(self) -> Var<'t> {
        let value = col_sums(&self.value());
        self.unary(value, Op::ColSum(self.id))
    }

    /// Mean down each column: R x C -> 1 x C.
    pub fn col_mean(self) -> Var<'t> {
        let a = self.value();
        let value = col_sums(&a).scale(1.0 / a.rows() as f64);
        self.unary(value, Op::ColMean(self.id))
    }

    pub fn l2_normalize_rows(self) -> Result<Var<'t>> {
        let value = self.value().l2_normalize_rows()?;
        Ok(self.unary(value, Op::L2NormalizeRows(self.id)))
    }

    pub fn softmax_rows(self) -> Var<'t> {
        let value = self.value().softmax_rows();
        self.unary(value, Op::SoftmaxRows(self.id))
    }

    /// Softmax over the entries of each row where `mask` (row-major, same
    /// shape) is true; masked entries come out as exactly zero.
    pub fn masked_softmax_rows(self, mask: Arc<Vec<bool>>) -> Result<Var<'t>> {
        let a = self.value();
        if mask.len() != a.len() {
            return Err(Error::Dimension(format!(
                "mask of length {} for a {}x{} matrix",
                mask.len(),
                a.rows(),
                a.cols()
            )));
        }
        let cols = a.cols();
        let mut data = a.data().to_vec();
        for (r, row) in data.chunks_mut(cols.max(1)).enumerate() {
            let m = &mask[r * cols..(r + 1) * cols];
            if !m.iter().any(|&x| x) {
                return Err(Error::Contract(format!("row {r} has no unmasked entry")));
            }
            for (v, &keep) in row.iter_mut().zip(m) {
                if !keep {
                    *v = f64::NEG_INFINITY;
                }
            }
            softmax_in_place(row);
        }
        Ok(self.unary(Matrix::from_raw(a.rows(), cols, data), Op::MaskedSoftmaxRows(self.id)))
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        let a = self.value();
        let cols = a.cols();
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.unary(Matrix::from_raw(a.rows(), cols, data), Op::LogSoftmaxRows(self.id))
    }

    /// Picks entry `(r, cols[r])` of every row: R x C -> R x 1.
    pub fn pick(self, cols: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if cols.len() != a.rows() {
            return Err(Error::Dimension(format!(
                "pick needs {} column indices, got {}",
                a.rows(),
                cols.len()
            )));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= a.cols()) {
            return Err(Error::Dimension(format!("pick column {bad} of {}", a.cols())));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| a.get(r, c)).collect();
        Ok(self.unary(Matrix::from_raw(a.rows(), 1, data), Op::Pick(self.id, cols.to_vec())))
    }
}
