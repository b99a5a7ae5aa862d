//! Reverse-mode differentiation over dense row-major tensors.
//!
//! A [`Tape`] records every operation of one forward evaluation together with
//! its output value. [`Tape::backward`] replays the record in reverse and
//! returns a fresh [`Gradients`] table. Tapes are rebuilt for every forward
//! pass; nothing is cached between evaluations.
//!
//! Row-wise operations ([`Tape::linear`], [`Tape::gather_rows`],
//! [`Tape::segment_max`], ...) treat the last axis as columns and all leading
//! axes as rows, which lets one node process every BS, UE or edge of a graph
//! at once. Each output row is computed from its own input rows with a fixed
//! accumulation order, so relabeling rows relabels the result bit-for-bit.

use super::tensor::{axpy, dot, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const NO_ROW: usize = usize::MAX;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, index: Vec<usize> },
    SegmentMax { x: Var, argmax: Vec<usize> },
    MaxOf { inputs: Vec<Var>, argmax: Vec<usize> },
    SegmentSum { x: Var, groups: Vec<Vec<usize>> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Maximum(Var, Var),
    MulCol { x: Var, s: Var },
    AddScalar(Var),
    Scale(Var, T),
    Ln(Var),
    Sqrt(Var),
    RowSum(Var),
    Sum(Var),
    SliceCols { x: Var, start: usize },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Append-only record of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn out_shape_with_cols(shape: &[usize], cols: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    match s.last_mut() {
        Some(last) => *last = cols,
        None => s.push(cols),
    }
    s
}

fn slot<'a, T: Scalar>(grads: &'a mut [Option<Tensor<T>>], v: Var, shape: &[usize]) -> &'a mut Tensor<T> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`; earlier `Var`s stay valid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    /// `x W^T + b` applied to every row of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.rank() != 2 {
            return Err(Error::shape(
                "linear",
                format!("weight must be rank 2, got {:?}", wv.shape()),
            ));
        }
        let (n_out, n_in) = (wv.shape()[0], wv.shape()[1]);
        if xv.cols() != n_in || bv.numel() != n_out {
            return Err(Error::shape(
                "linear",
                format!("x {:?}, W {:?}, b {:?}", xv.shape(), wv.shape(), bv.shape()),
            ));
        }
        let rows = xv.rows();
        let mut out = Vec::with_capacity(rows * n_out);
        out.resize(rows * n_out, T::zero());
        T::matmul_bias(xv.data(), wv.data(), bv.data(), &mut out);
        let value = Tensor::new(out_shape_with_cols(xv.shape(), n_out), out)?;
        Ok(self.push(Op::Linear { x, w, b }, value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Op::Relu(x), value)
    }

    /// Concatenates along the column axis; every input must have the same
    /// number of rows.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Argument("concat of an empty list".into()))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for &x in xs {
            let v = self.value(x);
            if v.rows() != rows {
                return Err(Error::shape("concat", format!("row count {} vs {rows}", v.rows())));
            }
            total += v.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &x in xs {
                out.extend_from_slice(self.value(x).row(i));
            }
        }
        let value = Tensor::new(out_shape_with_cols(self.value(*first).shape(), total), out)?;
        Ok(self.push(Op::Concat(xs.to_vec()), value))
    }

    /// Stacks inputs vertically; every input must have the same column count.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Argument("concat_rows of an empty list".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &x in xs {
            let v = self.value(x);
            if v.cols() != cols {
                return Err(Error::shape("concat_rows", format!("cols {} vs {cols}", v.cols())));
            }
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        let value = Tensor::new(vec![rows, cols], out)?;
        Ok(self.push(Op::ConcatRows(xs.to_vec()), value))
    }

    /// `out[r] = x[index[r]]`.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = Vec::with_capacity(index.len() * cols);
        for &r in index {
            if r >= rows {
                return Err(Error::shape("gather_rows", format!("row {r} of {rows}")));
            }
            out.extend_from_slice(xv.row(r));
        }
        let value = Tensor::new(vec![index.len(), cols], out)?;
        Ok(self.push(
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            value,
        ))
    }

    /// Column-wise maximum over each group of rows of `x`.
    ///
    /// An empty group yields a zero row. Ties go to the earliest row in the
    /// group's list.
    pub fn segment_max(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = vec![T::zero(); groups.len() * cols];
        let mut argmax = vec![NO_ROW; groups.len() * cols];
        for (g, members) in groups.iter().enumerate() {
            let Some((&head, rest)) = members.split_first() else {
                continue;
            };
            for &r in members {
                if r >= rows {
                    return Err(Error::shape("segment_max", format!("row {r} of {rows}")));
                }
            }
            let dst = &mut out[g * cols..(g + 1) * cols];
            let arg = &mut argmax[g * cols..(g + 1) * cols];
            dst.copy_from_slice(xv.row(head));
            arg.fill(head);
            for &r in rest {
                for (j, &v) in xv.row(r).iter().enumerate() {
                    if v > dst[j] {
                        dst[j] = v;
                        arg[j] = r;
                    }
                }
            }
        }
        let value = Tensor::new(vec![groups.len(), cols], out)?;
        Ok(self.push(Op::SegmentMax { x, argmax }, value))
    }

    /// Elementwise maximum across equally-shaped tensors; ties go to the
    /// lowest list index.
    pub fn reduce_max(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Argument("reduce_max of an empty list".into()))?;
        let shape = self.value(first).shape().to_vec();
        let mut out = self.value(first).data().to_vec();
        let mut argmax = vec![0usize; out.len()];
        for (idx, &x) in xs.iter().enumerate().skip(1) {
            let v = self.value(x);
            if v.shape() != shape.as_slice() {
                return Err(Error::shape("reduce_max", format!("{:?} vs {shape:?}", v.shape())));
            }
            for (j, &e) in v.data().iter().enumerate() {
                if e > out[j] {
                    out[j] = e;
                    argmax[j] = idx;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::MaxOf {
                inputs: xs.to_vec(),
                argmax,
            },
            value,
        ))
    }

    /// Sum over each group of rows of `x`; empty groups give a zero row.
    pub fn segment_sum(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = vec![T::zero(); groups.len() * cols];
        for (g, members) in groups.iter().enumerate() {
            let dst = &mut out[g * cols..(g + 1) * cols];
            for &r in members {
                if r >= rows {
                    return Err(Error::shape("segment_sum", format!("row {r} of {rows}")));
                }
                for (d, &v) in dst.iter_mut().zip(xv.row(r)) {
                    *d = *d + v;
                }
            }
        }
        let value = Tensor::new(vec![groups.len(), cols], out)?;
        Ok(self.push(
            Op::SegmentSum {
                x,
                groups: groups.to_vec(),
            },
            value,
        ))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise maximum of two tensors; ties go to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("maximum", a, b, |x, y| if y > x { y } else { x }, Op::Maximum(a, b))
    }

    /// Scales row `i` of `x` by `s[i]`.
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.numel() != xv.rows() {
            return Err(Error::shape(
                "mul_col",
                format!("x {:?}, s {:?}", xv.shape(), sv.shape()),
            ));
        }
        let cols = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &v)| v * sv.data()[idx / cols])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(Op::MulCol { x, s }, value))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(Op::AddScalar(x), value)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(Op::Scale(x, c), value)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let value = self.value(x).map(T::ln);
        self.push(Op::Ln(x), value)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let value = self.value(x).map(T::sqrt);
        self.push(Op::Sqrt(x), value)
    }

    /// Sums each row; the column axis collapses to length 1.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|i| xv.row(i).iter().copied().sum()).collect();
        let value = Tensor::new(out_shape_with_cols(xv.shape(), 1), data).expect("row count");
        self.push(Op::RowSum(x), value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value)
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if start > end || end > xv.cols() {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {}", xv.cols())));
        }
        let mut data = Vec::with_capacity(xv.rows() * (end - start));
        for i in 0..xv.rows() {
            data.extend_from_slice(&xv.row(i)[start..end]);
        }
        let value = Tensor::new(out_shape_with_cols(xv.shape(), end - start), data)?;
        Ok(self.push(Op::SliceCols { x, start }, value))
    }

    /// Accumulates `d loss / d v` for every recorded value `v`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        macro_rules! grad_of {
            ($v:expr) => {{
                let v: Var = $v;
                slot(grads, v, self.value(v).shape())
            }};
        }
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n_out, rows) = (wv.shape()[0], xv.rows());
                {
                    let dx = grad_of!(*x);
                    for i in 0..rows {
                        let gi = &gd[i * n_out..(i + 1) * n_out];
                        let dxi = dx.row_mut(i);
                        for (o, &go) in gi.iter().enumerate() {
                            if go != T::zero() {
                                axpy(go, wv.row(o), dxi);
                            }
                        }
                    }
                }
                {
                    let dw = grad_of!(*w);
                    for i in 0..rows {
                        let xi = xv.row(i);
                        for o in 0..n_out {
                            let go = gd[i * n_out + o];
                            if go != T::zero() {
                                axpy(go, xi, dw.row_mut(o));
                            }
                        }
                    }
                }
                let db = grad_of!(*b);
                let dbd = db.data_mut();
                for i in 0..rows {
                    for o in 0..n_out {
                        dbd[o] = dbd[o] + gd[i * n_out + o];
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = grad_of!(*x);
                for ((d, &gv), &xi) in dx.data_mut().iter_mut().zip(gd).zip(xv.data()) {
                    if xi > T::zero() {
                        *d = *d + gv;
                    }
                }
            }
            Op::Concat(xs) => {
                let total = g.cols();
                let mut offset = 0;
                for &x in xs {
                    let c = self.value(x).cols();
                    let dx = grad_of!(x);
                    for i in 0..dx.rows() {
                        let src = &gd[i * total + offset..i * total + offset + c];
                        for (d, &s) in dx.row_mut(i).iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).numel();
                    let dx = grad_of!(x);
                    for (d, &s) in dx.data_mut().iter_mut().zip(&gd[offset..offset + n]) {
                        *d = *d + s;
                    }
                    offset += n;
                }
            }
            Op::GatherRows { x, index } => {
                let cols = g.cols();
                let dx = grad_of!(*x);
                for (r, &src) in index.iter().enumerate() {
                    let gr = &gd[r * cols..(r + 1) * cols];
                    for (d, &s) in dx.row_mut(src).iter_mut().zip(gr) {
                        *d = *d + s;
                    }
                }
            }
            Op::SegmentMax { x, argmax } => {
                let cols = g.cols();
                let dx = grad_of!(*x);
                let dxd = dx.data_mut();
                for (idx, &r) in argmax.iter().enumerate() {
                    if r != NO_ROW {
                        let j = idx % cols;
                        dxd[r * cols + j] = dxd[r * cols + j] + gd[idx];
                    }
                }
            }
            Op::MaxOf { inputs, argmax } => {
                for (pos, &x) in inputs.iter().enumerate() {
                    let dx = grad_of!(x);
                    for ((d, &gv), &a) in dx.data_mut().iter_mut().zip(gd).zip(argmax) {
                        if a == pos {
                            *d = *d + gv;
                        }
                    }
                }
            }
            Op::SegmentSum { x, groups } => {
                let cols = g.cols();
                let dx = grad_of!(*x);
                for (gi, members) in groups.iter().enumerate() {
                    let gr = &gd[gi * cols..(gi + 1) * cols];
                    for &r in members {
                        for (d, &s) in dx.row_mut(r).iter_mut().zip(gr) {
                            *d = *d + s;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                grad_of!(*a).add_assign(g);
                grad_of!(*b).add_assign(g);
            }
            Op::Sub(a, b) => {
                grad_of!(*a).add_assign(g);
                let db = grad_of!(*b);
                for (d, &s) in db.data_mut().iter_mut().zip(gd) {
                    *d = *d - s;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                {
                    let da = grad_of!(*a);
                    for ((d, &s), &y) in da.data_mut().iter_mut().zip(gd).zip(bv.data()) {
                        *d = *d + s * y;
                    }
                }
                let db = grad_of!(*b);
                for ((d, &s), &x) in db.data_mut().iter_mut().zip(gd).zip(av.data()) {
                    *d = *d + s * x;
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                let out = &node.value;
                {
                    let da = grad_of!(*a);
                    for ((d, &s), &y) in da.data_mut().iter_mut().zip(gd).zip(bv.data()) {
                        *d = *d + s / y;
                    }
                }
                let db = grad_of!(*b);
                for (((d, &s), &y), &q) in db.data_mut().iter_mut().zip(gd).zip(bv.data()).zip(out.data()) {
                    *d = *d - s * q / y;
                }
            }
            Op::Maximum(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let take_b: Vec<bool> = av.data().iter().zip(bv.data()).map(|(x, y)| y > x).collect();
                {
                    let da = grad_of!(*a);
                    for ((d, &s), &tb) in da.data_mut().iter_mut().zip(gd).zip(&take_b) {
                        if !tb {
                            *d = *d + s;
                        }
                    }
                }
                let db = grad_of!(*b);
                for ((d, &s), &tb) in db.data_mut().iter_mut().zip(gd).zip(&take_b) {
                    if tb {
                        *d = *d + s;
                    }
                }
            }
            Op::MulCol { x, s } => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                let cols = xv.cols();
                {
                    let dx = grad_of!(*x);
                    for (idx, d) in dx.data_mut().iter_mut().enumerate() {
                        *d = *d + gd[idx] * sv.data()[idx / cols];
                    }
                }
                let ds = grad_of!(*s);
                for (i, d) in ds.data_mut().iter_mut().enumerate() {
                    let gr = &gd[i * cols..(i + 1) * cols];
                    *d = *d + dot(gr, xv.row(i));
                }
            }
            Op::AddScalar(x) => grad_of!(*x).add_assign(g),
            Op::Scale(x, c) => {
                let dx = grad_of!(*x);
                for (d, &s) in dx.data_mut().iter_mut().zip(gd) {
                    *d = *d + s * *c;
                }
            }
            Op::Ln(x) => {
                let xv = self.value(*x);
                let dx = grad_of!(*x);
                for ((d, &s), &v) in dx.data_mut().iter_mut().zip(gd).zip(xv.data()) {
                    *d = *d + s / v;
                }
            }
            Op::Sqrt(x) => {
                let out = &node.value;
                let dx = grad_of!(*x);
                let half = T::from_f64_lossy(0.5);
                for ((d, &s), &r) in dx.data_mut().iter_mut().zip(gd).zip(out.data()) {
                    if r > T::zero() {
                        *d = *d + s * half / r;
                    }
                }
            }
            Op::RowSum(x) => {
                let dx = grad_of!(*x);
                for i in 0..dx.rows() {
                    let gi = gd[i];
                    for d in dx.row_mut(i) {
                        *d = *d + gi;
                    }
                }
            }
            Op::Sum(x) => {
                let dx = grad_of!(*x);
                for d in dx.data_mut() {
                    *d = *d + gd[0];
                }
            }
            Op::SliceCols { x, start } => {
                let width = g.cols();
                let dx = grad_of!(*x);
                for i in 0..dx.rows() {
                    let gi = &gd[i * width..(i + 1) * width];
                    let dst = &mut dx.row_mut(i)[*start..*start + width];
                    for (d, &s) in dst.iter_mut().zip(gi) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::vector(v.to_vec())
    }

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![rows, cols], v.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3.0, 4.0]));
        let w = tape.leaf(mat(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let b = tape.leaf(t(&[0.0, 0.0]));
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn linear_row_vector() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2.0, 3.0]));
        let w = tape.leaf(mat(1, 2, &[1.0, 1.0]));
        let b = tape.leaf(t(&[1.0]));
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[6.0]);
    }

    #[test]
    fn linear_rejects_mismatch() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2.0, 3.0, 4.0]));
        let w = tape.leaf(mat(1, 2, &[1.0, 1.0]));
        let b = tape.leaf(t(&[1.0]));
        assert!(matches!(tape.linear(x, w, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn linear_input_gradient_is_column_sums() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[0.3, -1.2, 2.0]));
        let w = tape.leaf(mat(2, 3, &[1.0, 2.0, 3.0, -4.0, 5.0, 0.5]));
        let b = tape.leaf(t(&[0.1, 0.2]));
        let y = tape.linear(x, w, b).unwrap();
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[-3.0, 7.0, 3.5]);
    }

    #[test]
    fn relu_values_and_mask() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[-1.0, -0.5, -3.0]));
        let y = tape.relu(x);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concat_orders_inputs() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1.0]));
        let b = tape.leaf(t(&[2.0, 3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
        let single = tape.concat(&[b]).unwrap();
        assert_eq!(tape.value(single), tape.value(b));
        assert!(matches!(tape.concat(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn concat_backward_routes_ones() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1.0]));
        let b = tape.leaf(t(&[2.0, 3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        let s = tape.sum(c);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn reduce_max_values() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1.0, 5.0]));
        let b = tape.leaf(t(&[3.0, 2.0]));
        let m = tape.reduce_max(&[a, b]).unwrap();
        assert_eq!(tape.value(m).data(), &[3.0, 5.0]);
        let single = tape.reduce_max(&[a]).unwrap();
        assert_eq!(tape.value(single).data(), &[1.0, 5.0]);
        assert!(matches!(tape.reduce_max(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn reduce_max_tie_goes_to_first() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2.0, 2.0]));
        let b = tape.leaf(t(&[2.0, 2.0]));
        let m = tape.reduce_max(&[a, b]).unwrap();
        let s = tape.sum(m);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn segment_max_empty_group_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(mat(3, 2, &[-1.0, 4.0, -2.0, 7.0, -0.5, 1.0]));
        let m = tape.segment_max(x, &[vec![0, 1, 2], vec![], vec![1]]).unwrap();
        assert_eq!(tape.value(m).data(), &[-0.5, 7.0, 0.0, 0.0, -2.0, 7.0]);
        let s = tape.sum(m);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn relu_of_negated_input_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let n = tape.scale(x, -1.0);
        let y = tape.relu(n);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Argument(_))));
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let unused = tape.leaf(Tensor::scalar(5.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(unused).is_none());
    }

    #[test]
    fn backward_twice_gives_same_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[0.5, -2.0]));
        let y = tape.mul(x, x).unwrap();
        let s = tape.sum(y);
        let g1 = tape.backward(s).unwrap();
        let g2 = tape.backward(s).unwrap();
        assert_eq!(g1.get(x), g2.get(x));
        assert_eq!(g1.get(x).unwrap().data(), &[1.0, -4.0]);
    }
}
