use rand::Rng;

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
///
/// Handles are plain indices; they are only meaningful for the tape that
/// created them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Add(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    Relu(Tensor),
    RowSoftmax(Tensor),
    LogSoftmax(Tensor),
    BlockL2Normalize {
        x: Tensor,
        block: usize,
        eps: f64,
    },
    Dropout {
        x: Tensor,
        mask: Vec<f64>,
    },
    Reshape(Tensor),
    GatherRows {
        x: Tensor,
        idx: Vec<usize>,
    },
    ScatterAddRows {
        x: Tensor,
        idx: Vec<usize>,
    },
    SumAll(Tensor),
    Pick {
        x: Tensor,
        coords: Vec<(usize, usize)>,
    },
    CenterRows(Tensor),
    BatchedGram {
        x: Tensor,
        group: usize,
    },
    BlockDots {
        a: Tensor,
        a_rows: Vec<usize>,
        b: Tensor,
        b_rows: Vec<usize>,
        blocks: usize,
    },
    BlockWeightedScatter {
        a: Tensor,
        a_rows: Vec<usize>,
        w: Tensor,
        out_idx: Vec<usize>,
        blocks: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    requires_grad: bool,
    grad: Option<Matrix>,
    op: Op,
}

/// Linear record of executed operations for reverse-mode differentiation.
///
/// Every operation appends one node whose inputs are earlier nodes, so the
/// node order is a topological order and the backward sweep is a single
/// reverse pass. Shape checks happen when an operation is recorded.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Records an input value. Gradients are accumulated for it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Tensor {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Tensor(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Matrix) -> Tensor {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.leaf(value, false)
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes[t.0].value.shape()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Accumulated gradient of a leaf created with `requires_grad`.
    pub fn grad(&self, t: Tensor) -> Option<&Matrix> {
        self.nodes[t.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Tensor]) -> Tensor {
        let requires_grad = inputs.iter().any(|t| self.nodes[t.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x + y)
            .map_err(|_| Error::shape("add", self.shape(a), self.shape(b)))?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Adds a `1×n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Tensor, row: Tensor) -> Result<Tensor> {
        let (m, n) = self.shape(a);
        if self.shape(row) != (1, n) {
            return Err(Error::shape("add_row", (m, n), self.shape(row)));
        }
        let mut value = self.value(a).clone();
        let bias = self.value(row).data().to_vec();
        for i in 0..m {
            for (v, b) in value.row_mut(i).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x * y)
            .map_err(|_| Error::shape("mul", self.shape(a), self.shape(b)))?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn row_softmax(&mut self, x: Tensor) -> Tensor {
        let value = softmax_rows(self.value(x));
        self.push(value, Op::RowSoftmax(x), &[x])
    }

    /// Row-wise `log(softmax(x))`, computed as `x - max - log Σ exp(x - max)`.
    pub fn log_softmax(&mut self, x: Tensor) -> Tensor {
        let input = self.value(x);
        let mut value = input.clone();
        for i in 0..input.rows() {
            let row = value.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(value, Op::LogSoftmax(x), &[x])
    }

    pub fn row_l2_normalize(&mut self, x: Tensor, eps: f64) -> Result<Tensor> {
        let cols = self.shape(x).1;
        self.block_l2_normalize(x, cols.max(1), eps)
    }

    /// Divides every contiguous `block`-wide slice of each row by
    /// `max(‖slice‖₂, eps)`.
    pub fn block_l2_normalize(&mut self, x: Tensor, block: usize, eps: f64) -> Result<Tensor> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("normalization eps must be > 0, got {eps}")));
        }
        let (m, n) = self.shape(x);
        if block == 0 || n % block != 0 {
            return Err(Error::shape("block_l2_normalize", (m, n), (1, block)));
        }
        let mut value = self.value(x).clone();
        for chunk in value.data_mut().chunks_mut(block) {
            let denom = l2_norm(chunk).max(eps);
            chunk.iter_mut().for_each(|v| *v /= denom);
        }
        Ok(self.push(value, Op::BlockL2Normalize { x, block, eps }, &[x]))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)` so evaluation
    /// mode is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Tensor,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let input = self.value(x);
        let mask: Vec<f64> = (0..input.data().len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = input.data().iter().zip(&mask).map(|(v, k)| v * k).collect();
        let value = Matrix::from_vec(input.rows(), input.cols(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    pub fn reshape(&mut self, x: Tensor, rows: usize, cols: usize) -> Result<Tensor> {
        let value = self.value(x).clone().reshaped(rows, cols)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Output row `k` is input row `idx[k]`.
    pub fn gather_rows(&mut self, x: Tensor, idx: &[usize]) -> Result<Tensor> {
        let (m, n) = self.shape(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::shape("gather_rows", (m, n), (bad, n)));
        }
        let value = self.value(x).select_rows(idx);
        Ok(self.push(value, Op::GatherRows { x, idx: idx.to_vec() }, &[x]))
    }

    /// Output is `out_rows × n` with input row `k` added into row `idx[k]`.
    pub fn scatter_add_rows(&mut self, x: Tensor, idx: &[usize], out_rows: usize) -> Result<Tensor> {
        let (m, n) = self.shape(x);
        if idx.len() != m {
            return Err(Error::shape("scatter_add_rows", (m, n), (idx.len(), 1)));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(Error::shape("scatter_add_rows", (out_rows, n), (bad, n)));
        }
        let input = self.value(x);
        let mut value = Matrix::zeros(out_rows, n);
        for (k, &i) in idx.iter().enumerate() {
            for (o, v) in value.row_mut(i).iter_mut().zip(input.row(k)) {
                *o += v;
            }
        }
        Ok(self.push(value, Op::ScatterAddRows { x, idx: idx.to_vec() }, &[x]))
    }

    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        self.push(value, Op::SumAll(x), &[x])
    }

    /// Column vector of the selected `(row, col)` entries.
    pub fn pick(&mut self, x: Tensor, coords: &[(usize, usize)]) -> Result<Tensor> {
        let (m, n) = self.shape(x);
        if let Some(&(r, c)) = coords.iter().find(|&&(r, c)| r >= m || c >= n) {
            return Err(Error::shape("pick", (m, n), (r, c)));
        }
        let input = self.value(x);
        let data = coords.iter().map(|&(r, c)| input.get(r, c)).collect();
        let value = Matrix::from_vec(coords.len(), 1, data)?;
        Ok(self.push(
            value,
            Op::Pick {
                x,
                coords: coords.to_vec(),
            },
            &[x],
        ))
    }

    /// Subtracts each row's mean from the row.
    pub fn center_rows(&mut self, x: Tensor) -> Tensor {
        let value = centered_rows(self.value(x));
        self.push(value, Op::CenterRows(x), &[x])
    }

    /// Per-group Gram matrices. `x` is `(k·group)×d`; output row `u` holds the
    /// row-major `group×group` inner products of rows `u·group..(u+1)·group`.
    pub fn batched_gram(&mut self, x: Tensor, group: usize) -> Result<Tensor> {
        let (m, d) = self.shape(x);
        if group == 0 || m % group != 0 {
            return Err(Error::shape("batched_gram", (m, d), (group, 1)));
        }
        let input = self.value(x);
        let k = m / group;
        let mut value = Matrix::zeros(k, group * group);
        for u in 0..k {
            for i in 0..group {
                for j in i..group {
                    let g = dot(input.row(u * group + i), input.row(u * group + j));
                    value.set(u, i * group + j, g);
                    value.set(u, j * group + i, g);
                }
            }
        }
        Ok(self.push(value, Op::BatchedGram { x, group }, &[x]))
    }

    /// Channel-wise inner products between indexed row pairs.
    ///
    /// `a` and `b` have the same width `blocks·d`. Output is `E×blocks`,
    /// `E = a_rows.len() = b_rows.len()`, with entry `(e, m)` the inner
    /// product of block `m` of `a[a_rows[e]]` and of `b[b_rows[e]]`.
    pub fn block_dots(
        &mut self,
        a: Tensor,
        a_rows: &[usize],
        b: Tensor,
        b_rows: &[usize],
        blocks: usize,
    ) -> Result<Tensor> {
        let (na, wa) = self.shape(a);
        let (nb, wb) = self.shape(b);
        if wa != wb || blocks == 0 || wa % blocks != 0 || a_rows.len() != b_rows.len() {
            return Err(Error::shape("block_dots", (na, wa), (nb, wb)));
        }
        check_rows("block_dots", a_rows, (na, wa))?;
        check_rows("block_dots", b_rows, (nb, wb))?;
        let d = wa / blocks;
        let (av, bv) = (self.value(a), self.value(b));
        let mut value = Matrix::zeros(a_rows.len(), blocks);
        for (e, (&ra, &rb)) in a_rows.iter().zip(b_rows).enumerate() {
            let pairs = av.row(ra).chunks_exact(d).zip(bv.row(rb).chunks_exact(d));
            for (out, (x, y)) in value.row_mut(e).iter_mut().zip(pairs) {
                *out = dot(x, y);
            }
        }
        Ok(self.push(
            value,
            Op::BlockDots {
                a,
                a_rows: a_rows.to_vec(),
                b,
                b_rows: b_rows.to_vec(),
                blocks,
            },
            &[a, b],
        ))
    }

    /// Weighted per-channel scatter-sum.
    ///
    /// `a` is `n×(blocks·d)` and `w` is `E×blocks`. Output is
    /// `out_rows×(blocks·d)` where block `m` of row `out_idx[e]` accumulates
    /// `w[e, m]` times block `m` of `a[a_rows[e]]`, in edge order.
    pub fn block_weighted_scatter(
        &mut self,
        a: Tensor,
        a_rows: &[usize],
        w: Tensor,
        out_idx: &[usize],
        out_rows: usize,
        blocks: usize,
    ) -> Result<Tensor> {
        let (na, wa) = self.shape(a);
        let edges = a_rows.len();
        if blocks == 0 || wa % blocks != 0 || self.shape(w) != (edges, blocks) || out_idx.len() != edges {
            return Err(Error::shape("block_weighted_scatter", (na, wa), self.shape(w)));
        }
        check_rows("block_weighted_scatter", a_rows, (na, wa))?;
        check_rows("block_weighted_scatter", out_idx, (out_rows, wa))?;
        let d = wa / blocks;
        let (av, wv) = (self.value(a), self.value(w));
        let mut value = Matrix::zeros(out_rows, wa);
        for (e, (&ra, &r)) in a_rows.iter().zip(out_idx).enumerate() {
            let blocks_in = av.row(ra).chunks_exact(d);
            for ((out, x), &weight) in value.row_mut(r).chunks_exact_mut(d).zip(blocks_in).zip(wv.row(e)) {
                axpy(out, weight, x);
            }
        }
        Ok(self.push(
            value,
            Op::BlockWeightedScatter {
                a,
                a_rows: a_rows.to_vec(),
                w,
                out_idx: out_idx.to_vec(),
                blocks,
            },
            &[a, w],
        ))
    }

    /// Accumulates `∂loss/∂t` into every leaf `t` created with
    /// `requires_grad`. Repeated calls add up; use [`Tape::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Validation(format!(
                "tensor {} is not recorded on this tape",
                loss.0
            )));
        }
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::shape("backward", shape, (1, 1)));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (input, contribution) in self.local_grads(i, &g)? {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for each input that needs one.
    fn local_grads(&self, i: usize, g: &Matrix) -> Result<Vec<(Tensor, Matrix)>> {
        let node = &self.nodes[i];
        let needs = |t: &Tensor| self.nodes[t.0].requires_grad;
        let val = |t: &Tensor| &self.nodes[t.0].value;
        let mut out = Vec::with_capacity(2);

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    out.push((*a, g.matmul_nt(val(b))?));
                }
                if needs(b) {
                    out.push((*b, val(a).matmul_tn(g)?));
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    out.push((*a, g.clone()));
                }
                if needs(b) {
                    out.push((*b, g.clone()));
                }
            }
            Op::AddRow(a, row) => {
                if needs(a) {
                    out.push((*a, g.clone()));
                }
                if needs(row) {
                    let mut col_sums = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.data_mut().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    out.push((*row, col_sums));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((*a, g.zip_map(val(b), |x, y| x * y)?));
                }
                if needs(b) {
                    out.push((*b, g.zip_map(val(a), |x, y| x * y)?));
                }
            }
            Op::Scale(a, c) => out.push((*a, g.scale(*c))),
            Op::Relu(x) => {
                out.push((*x, g.zip_map(val(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?));
            }
            Op::RowSoftmax(x) => {
                let y = &node.value;
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let s = dot(g.row(r), y.row(r));
                    for (d, yv) in dx.row_mut(r).iter_mut().zip(y.row(r)) {
                        *d = yv * (*d - s);
                    }
                }
                out.push((*x, dx));
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let s: f64 = g.row(r).iter().sum();
                    for (d, yv) in dx.row_mut(r).iter_mut().zip(y.row(r)) {
                        *d -= yv.exp() * s;
                    }
                }
                out.push((*x, dx));
            }
            Op::BlockL2Normalize { x, block, eps } => {
                let input = val(x);
                let y = &node.value;
                let mut dx = g.clone();
                let chunks = dx
                    .data_mut()
                    .chunks_mut(*block)
                    .zip(input.data().chunks(*block))
                    .zip(y.data().chunks(*block));
                for ((d, xin), yout) in chunks {
                    let norm = l2_norm(xin);
                    if norm > *eps {
                        let proj = dot(d, yout);
                        for (dv, yv) in d.iter_mut().zip(yout) {
                            *dv = (*dv - yv * proj) / norm;
                        }
                    } else {
                        d.iter_mut().for_each(|dv| *dv /= eps);
                    }
                }
                out.push((*x, dx));
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, b)| a * b).collect();
                out.push((*x, Matrix::from_vec(g.rows(), g.cols(), data)?));
            }
            Op::Reshape(x) => {
                let (r, c) = val(x).shape();
                out.push((*x, g.clone().reshaped(r, c)?));
            }
            Op::GatherRows { x, idx } => {
                let (m, n) = val(x).shape();
                let mut dx = Matrix::zeros(m, n);
                for (k, &r) in idx.iter().enumerate() {
                    for (d, v) in dx.row_mut(r).iter_mut().zip(g.row(k)) {
                        *d += v;
                    }
                }
                out.push((*x, dx));
            }
            Op::ScatterAddRows { x, idx } => out.push((*x, g.select_rows(idx))),
            Op::SumAll(x) => {
                let (m, n) = val(x).shape();
                out.push((*x, Matrix::filled(m, n, g.get(0, 0))));
            }
            Op::Pick { x, coords } => {
                let (m, n) = val(x).shape();
                let mut dx = Matrix::zeros(m, n);
                for (k, &(r, c)) in coords.iter().enumerate() {
                    dx.set(r, c, dx.get(r, c) + g.get(k, 0));
                }
                out.push((*x, dx));
            }
            Op::CenterRows(x) => out.push((*x, centered_rows(g))),
            Op::BatchedGram { x, group } => {
                let input = val(x);
                let (m, d) = input.shape();
                let group = *group;
                let mut dx = Matrix::zeros(m, d);
                for u in 0..m / group {
                    for i in 0..group {
                        let target = u * group + i;
                        for j in 0..group {
                            let coef = g.get(u, i * group + j) + g.get(u, j * group + i);
                            if coef == 0.0 {
                                continue;
                            }
                            let src = input.row(u * group + j);
                            for (dv, sv) in dx.row_mut(target).iter_mut().zip(src) {
                                *dv += coef * sv;
                            }
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::BlockDots {
                a,
                a_rows,
                b,
                b_rows,
                blocks,
            } => {
                let (av, bv) = (val(a), val(b));
                let d = av.cols() / blocks;
                if needs(a) {
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    for (e, (&ra, &rb)) in a_rows.iter().zip(b_rows).enumerate() {
                        let src = bv.row(rb).chunks_exact(d);
                        for ((dst, x), &ge) in da.row_mut(ra).chunks_exact_mut(d).zip(src).zip(g.row(e)) {
                            axpy(dst, ge, x);
                        }
                    }
                    out.push((*a, da));
                }
                if needs(b) {
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    for (e, (&ra, &rb)) in a_rows.iter().zip(b_rows).enumerate() {
                        let src = av.row(ra).chunks_exact(d);
                        for ((dst, x), &ge) in db.row_mut(rb).chunks_exact_mut(d).zip(src).zip(g.row(e)) {
                            axpy(dst, ge, x);
                        }
                    }
                    out.push((*b, db));
                }
            }
            Op::BlockWeightedScatter {
                a,
                a_rows,
                w,
                out_idx,
                blocks,
            } => {
                let (av, wv) = (val(a), val(w));
                let d = av.cols() / blocks;
                if needs(a) {
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    for (e, (&ra, &r)) in a_rows.iter().zip(out_idx).enumerate() {
                        let src = g.row(r).chunks_exact(d);
                        for ((dst, x), &weight) in da.row_mut(ra).chunks_exact_mut(d).zip(src).zip(wv.row(e)) {
                            axpy(dst, weight, x);
                        }
                    }
                    out.push((*a, da));
                }
                if needs(w) {
                    let mut dw = Matrix::zeros(wv.rows(), wv.cols());
                    for (e, (&ra, &r)) in a_rows.iter().zip(out_idx).enumerate() {
                        let pairs = av.row(ra).chunks_exact(d).zip(g.row(r).chunks_exact(d));
                        for (slot, (x, y)) in dw.row_mut(e).iter_mut().zip(pairs) {
                            *slot = dot(x, y);
                        }
                    }
                    out.push((*w, dw));
                }
            }
        }
        Ok(out)
    }
}

fn check_rows(op: &'static str, rows: &[usize], shape: (usize, usize)) -> Result<()> {
    match rows.iter().find(|&&r| r >= shape.0) {
        Some(&bad) => Err(Error::shape(op, shape, (bad, shape.1))),
        None => Ok(()),
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Numerically stable row-wise softmax of a plain matrix.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn centered_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    let n = x.cols() as f64;
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / n;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    out
}
