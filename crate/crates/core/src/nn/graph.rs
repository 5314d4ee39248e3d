//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Graph`] borrows a [`ParameterStore`]; parameter nodes read their
//! values from the store without copying. Every op records its inputs and
//! [`Graph::backward`] walks the tape in reverse.

use super::params::{Gradients, ParamId, ParameterStore};
use super::tensor::{self, Tensor2};
use crate::error::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor2),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MeanRows(Var, usize, usize),
    Gather(Var, Vec<usize>),
    LogSoftmax(Var),
    Softmax(Var),
    Pick(Var, usize),
    Sum(Var),
    SumAll(Vec<Var>),
    SqSum(Var),
    Bilinear(Var, Var, Var, usize),
}

struct Node {
    op: Op,
    value: Option<Tensor2>,
    needs_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Graph { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op, value: Tensor2, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { op, value: Some(value), needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.nodes.push(Node { op: Op::Constant, value: Some(value), needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let needs_grad = self.store.get(id).trainable;
        self.nodes.push(Node { op: Op::Param(id), value: None, needs_grad });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out, &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(Op::MatMulT(a, b), out, &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::dim(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| f(*p, *q)).collect();
        Tensor2::from_vec(x.rows(), x.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        let out = self.zip(a, b, |p, q| p + q);
        Ok(self.push(Op::Add(a, b), out, &[a, b]))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let ((r, c), (br, bc)) = (self.shape(a), self.shape(b));
        if br != 1 || bc != c {
            return Err(NnError::dim("add_row", format!("{:?} + {:?}", (r, c), (br, bc))));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..r {
            out.data_mut()[i * c..(i + 1) * c].iter_mut().zip(&bias).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(Op::AddRow(a, b), out, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("sub", a, b)?;
        let out = self.zip(a, b, |p, q| p - q);
        Ok(self.push(Op::Sub(a, b), out, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        let out = self.zip(a, b, |p, q| p * q);
        Ok(self.push(Op::Mul(a, b), out, &[a, b]))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Tensor2) -> Result<Var, NnError> {
        if self.shape(a) != mask.shape() {
            return Err(NnError::dim("mul_const", format!("{:?} vs {:?}", self.shape(a), mask.shape())));
        }
        let x = self.value(a);
        let data = x.data().iter().zip(mask.data()).map(|(p, q)| p * q).collect();
        let out = Tensor2::from_vec(x.rows(), x.cols(), data)?;
        Ok(self.push(Op::MulConst(a, mask), out, &[a]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(Op::Scale(a, c), out, &[a])
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| 1.0 - v);
        self.push(Op::OneMinus(a), out, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(tensor::sigmoid);
        self.push(Op::Sigmoid(a), out, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out, &[a])
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(tensor::elu);
        self.push(Op::Elu(a), out, &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|p| self.shape(*p).0 != rows) {
            return Err(NnError::dim("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let row = self.value(*p).row(r);
                out.data_mut()[r * cols + off..r * cols + off + row.len()].copy_from_slice(row);
                off += row.len();
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out, parts))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let cols = self.shape(parts[0]).1;
        if parts.iter().any(|p| self.shape(*p).1 != cols) {
            return Err(NnError::dim("stack_rows", "column counts differ"));
        }
        let data: Vec<f64> = parts.iter().flat_map(|p| self.value(*p).data().to_vec()).collect();
        let rows = data.len() / cols.max(1);
        let out = Tensor2::from_vec(rows, cols, data)?;
        Ok(self.push(Op::StackRows(parts.to_vec()), out, parts))
    }

    /// Rows `start..start+len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if start + len > r || len == 0 {
            return Err(NnError::dim("slice_rows", format!("rows {start}..{} of {r}", start + len)));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor2::from_vec(len, c, data)?;
        Ok(self.push(Op::SliceRows(a, start), out, &[a]))
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(NnError::dim("slice_cols", format!("cols {start}..{} of {c}", start + len)));
        }
        let x = self.value(a);
        let data: Vec<f64> = (0..r).flat_map(|i| x.row(i)[start..start + len].to_vec()).collect();
        let out = Tensor2::from_vec(r, len, data)?;
        Ok(self.push(Op::SliceCols(a, start), out, &[a]))
    }

    /// Mean of rows `start..end` as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if start >= end || end > r {
            return Err(NnError::dim("mean_rows", format!("rows {start}..{end} of {r}")));
        }
        let x = self.value(a);
        let mut out = vec![0.0; c];
        for i in start..end {
            out.iter_mut().zip(x.row(i)).for_each(|(o, v)| *o += v);
        }
        let n = (end - start) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(self.push(Op::MeanRows(a, start, end), Tensor2::row_vector(out), &[a]))
    }

    /// Embedding lookup: row `indices[i]` of `table` becomes row `i`.
    pub fn gather(&mut self, table: Var, indices: Vec<usize>) -> Result<Var, NnError> {
        let (r, c) = self.shape(table);
        if let Some(bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NnError::dim("gather", format!("index {bad} of {r} rows")));
        }
        let t = self.value(table);
        let data: Vec<f64> = indices.iter().flat_map(|&i| t.row(i).to_vec()).collect();
        let out = Tensor2::from_vec(indices.len(), c, data)?;
        Ok(self.push(Op::Gather(table, indices), out, &[table]))
    }

    fn require_row(&self, op: &'static str, a: Var) -> Result<(), NnError> {
        if self.shape(a).0 != 1 {
            return Err(NnError::dim(op, format!("expected a row vector, got {:?}", self.shape(a))));
        }
        Ok(())
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, NnError> {
        self.require_row("log_softmax", a)?;
        let out = Tensor2::row_vector(tensor::log_softmax(self.value(a).data()));
        Ok(self.push(Op::LogSoftmax(a), out, &[a]))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, NnError> {
        self.require_row("softmax", a)?;
        let out = Tensor2::row_vector(tensor::softmax(self.value(a).data()));
        Ok(self.push(Op::Softmax(a), out, &[a]))
    }

    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var, NnError> {
        let x = self.value(a);
        if index >= x.len() {
            return Err(NnError::dim("pick", format!("index {index} of {}", x.len())));
        }
        let out = Tensor2::scalar(x.data()[index]);
        Ok(self.push(Op::Pick(a, index), out, &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor2::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), out, &[a])
    }

    /// Sum of scalar nodes; an empty list gives 0.
    pub fn sum_all(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        if parts.iter().any(|p| self.shape(*p) != (1, 1)) {
            return Err(NnError::dim("sum_all", "expected scalars"));
        }
        let total = parts.iter().fold(0.0, |acc, p| acc + self.value(*p).item());
        Ok(self.push(Op::SumAll(parts.to_vec()), Tensor2::scalar(total), parts))
    }

    pub fn sq_sum(&mut self, a: Var) -> Var {
        let out = Tensor2::scalar(self.value(a).sq_sum());
        self.push(Op::SqSum(a), out, &[a])
    }

    /// Bilinear form `out[r] = Σ_ab l[a] W[a, b·R + r] rt[b]`, with `W` stored as `d x (d·R)`.
    pub fn bilinear(&mut self, l: Var, w: Var, r: Var, n_out: usize) -> Result<Var, NnError> {
        let (ls, ws, rs) = (self.shape(l), self.shape(w), self.shape(r));
        if ls.0 != 1 || rs.0 != 1 || ws.0 != ls.1 || ws.1 != rs.1 * n_out {
            return Err(NnError::dim("bilinear", format!("l {ls:?}, W {ws:?}, r {rs:?}, R {n_out}")));
        }
        let t = self.value(l).matmul(self.value(w))?;
        let rv = self.value(r).data();
        let mut out = vec![0.0; n_out];
        for (b, &rb) in rv.iter().enumerate() {
            let block = &t.data()[b * n_out..(b + 1) * n_out];
            out.iter_mut().zip(block).for_each(|(o, v)| *o += rb * v);
        }
        Ok(self.push(Op::Bilinear(l, w, r, n_out), Tensor2::row_vector(out), &[l, w, r]))
    }

    /// Gradients of the scalar `loss` with respect to every trainable parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads = Gradients::new(self.store.len());
        if !self.nodes[loss.0].needs_grad {
            return grads;
        }
        let mut node_grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        node_grads[loss.0] = Some(Tensor2::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = node_grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let mut send = |v: Var, contribution: Tensor2| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut node_grads[v.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            };
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.add(*id, &g),
                Op::MatMul(a, b) => {
                    send(*a, g.matmul_t(self.value(*b)).expect("shapes"));
                    send(*b, self.value(*a).t_matmul(&g).expect("shapes"));
                }
                Op::MatMulT(a, b) => {
                    send(*a, g.matmul(self.value(*b)).expect("shapes"));
                    send(*b, g.t_matmul(self.value(*a)).expect("shapes"));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::AddRow(a, b) => {
                    let c = g.cols();
                    let mut col = vec![0.0; c];
                    for r in 0..g.rows() {
                        col.iter_mut().zip(g.row(r)).for_each(|(s, v)| *s += v);
                    }
                    send(*b, Tensor2::row_vector(col));
                    send(*a, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v));
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    send(*a, elementwise(&g, self.value(*b), |p, q| p * q));
                    send(*b, elementwise(&g, self.value(*a), |p, q| p * q));
                }
                Op::MulConst(a, mask) => send(*a, elementwise(&g, mask, |p, q| p * q)),
                Op::Scale(a, c) => send(*a, g.map(|v| v * c)),
                Op::OneMinus(a) => send(*a, g.map(|v| -v)),
                Op::Sigmoid(a) => send(*a, elementwise(&g, y.unwrap(), |p, s| p * s * (1.0 - s))),
                Op::Tanh(a) => send(*a, elementwise(&g, y.unwrap(), |p, t| p * (1.0 - t * t))),
                Op::Elu(a) => {
                    let x = self.value(*a);
                    let d = elementwise(x, y.unwrap(), |xv, yv| if xv > 0.0 { 1.0 } else { yv + 1.0 });
                    send(*a, elementwise(&g, &d, |p, q| p * q));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let data: Vec<f64> = (0..r).flat_map(|i| g.row(i)[off..off + c].to_vec()).collect();
                        send(*p, Tensor2::from_vec(r, c, data).expect("shape"));
                        off += c;
                    }
                }
                Op::StackRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let data = g.data()[row * c..(row + r) * c].to_vec();
                        send(*p, Tensor2::from_vec(r, c, data).expect("shape"));
                        row += r;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Tensor2::zeros(r, c);
                    full.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    send(*a, full);
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Tensor2::zeros(r, c);
                    for i in 0..r {
                        full.data_mut()[i * c + start..i * c + start + g.cols()].copy_from_slice(g.row(i));
                    }
                    send(*a, full);
                }
                Op::MeanRows(a, start, end) => {
                    let (r, c) = self.shape(*a);
                    let n = (end - start) as f64;
                    let mut full = Tensor2::zeros(r, c);
                    for i in *start..*end {
                        full.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.data()).for_each(|(o, v)| *o = v / n);
                    }
                    send(*a, full);
                }
                Op::Gather(table, indices) => {
                    let (r, c) = self.shape(*table);
                    let mut full = Tensor2::zeros(r, c);
                    for (i, &row) in indices.iter().enumerate() {
                        full.data_mut()[row * c..(row + 1) * c].iter_mut().zip(g.row(i)).for_each(|(o, v)| *o += v);
                    }
                    send(*table, full);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.data().iter().sum();
                    let d = elementwise(&g, y.unwrap(), |p, ly| p - ly.exp() * total);
                    send(*a, d);
                }
                Op::Softmax(a) => {
                    let gy = tensor::dot(g.data(), y.unwrap().data());
                    send(*a, elementwise(&g, y.unwrap(), |p, s| s * (p - gy)));
                }
                Op::Pick(a, index) => {
                    let (r, c) = self.shape(*a);
                    let mut full = Tensor2::zeros(r, c);
                    full.data_mut()[*index] = g.item();
                    send(*a, full);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    send(*a, Tensor2::filled(r, c, g.item()));
                }
                Op::SumAll(parts) => {
                    for p in parts {
                        send(*p, g.clone());
                    }
                }
                Op::SqSum(a) => send(*a, self.value(*a).map(|v| 2.0 * v * g.item())),
                Op::Bilinear(l, w, r, n_out) => {
                    let (lv, wv, rv) = (self.value(*l), self.value(*w), self.value(*r));
                    let d_r = rv.cols();
                    let mut dt = vec![0.0; d_r * n_out];
                    for b in 0..d_r {
                        for k in 0..*n_out {
                            dt[b * n_out + k] = rv.data()[b] * g.data()[k];
                        }
                    }
                    let dt = Tensor2::row_vector(dt);
                    if self.nodes[r.0].needs_grad {
                        let t = lv.matmul(wv).expect("shapes");
                        let dr: Vec<f64> = (0..d_r)
                            .map(|b| tensor::dot(&t.data()[b * n_out..(b + 1) * n_out], g.data()))
                            .collect();
                        send(*r, Tensor2::row_vector(dr));
                    }
                    send(*l, dt.matmul_t(wv).expect("shapes"));
                    send(*w, lv.t_matmul(&dt).expect("shapes"));
                }
            }
        }
        grads
    }
}

fn elementwise(a: &Tensor2, b: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
    let data = a.data().iter().zip(b.data()).map(|(p, q)| f(*p, *q)).collect();
    Tensor2::from_vec(a.rows(), a.cols(), data).expect("same shape")
}
