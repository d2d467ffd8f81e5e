use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{mm_acc, mm_nt_acc, mm_tn_acc, Tensor};

/// Variance floor for layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Probability clamp applied inside the cross-entropy op before the log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum UnaryKind {
    Tanh,
    Sin,
    Cos,
    Square,
    Sigmoid,
    Gelu,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// A[m×k] · B[k×n]
    Matmul { a: usize, b: usize },
    /// A[m×k] · B[n×k]ᵀ
    MatmulNT { a: usize, b: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    /// mul·x + add, elementwise; the additive part has zero derivative and
    /// is not retained
    Affine { a: usize, mul: f64 },
    /// matrix + row vector broadcast over rows
    AddRow { a: usize, row: usize },
    Unary { a: usize, kind: UnaryKind },
    SoftmaxRows { a: usize },
    LayerNorm { a: usize, gain: usize, bias: usize },
    /// out row i = a row ids[i]; scatter-add backward
    TakeRows { a: usize, ids: Vec<usize> },
    SliceRows { a: usize, start: usize, len: usize },
    ConcatRows { parts: Vec<usize> },
    ConcatCols { parts: Vec<usize> },
    /// top-left size×size block of a square matrix
    BlockTopLeft { a: usize, size: usize },
    Sum { a: usize },
    FrobeniusNorm { a: usize },
    /// mean over rows of the per-row sum of binary cross-entropy terms
    BceMean { probs: usize, targets: Tensor },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Vec<f64>>,
}

/// Define-by-run gradient tape.
///
/// Nodes are appended in forward order; [`Tape::backward`] replays them in
/// reverse append order, visiting each node exactly once. A tape is built
/// fresh for every forward pass and confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Put a tensor on the tape as an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient buffer of `v`, if any gradient reached it during backward.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient of `v`, with zeros for nodes the loss never reached.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<f64> {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.0].value.numel()],
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }

    // ── forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                detail: format!("inner dimensions disagree: {:?} × {:?}", ta.shape(), tb.shape()),
            });
        }
        let mut out = vec![0.0; m * n];
        mm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::Matmul { a: a.0, b: b.0 }, value))
    }

    /// A · Bᵀ without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        let (m, k) = (ta.rows(), ta.cols());
        let (n, k2) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul_nt",
                detail: format!("inner dimensions disagree: {:?} × {:?}ᵀ", ta.shape(), tb.shape()),
            });
        }
        let mut out = vec![0.0; m * n];
        mm_nt_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatmulNT { a: a.0, b: b.0 }, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: name,
                detail: format!("shapes disagree: {:?} vs {:?}", ta.shape(), tb.shape()),
            });
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(op, value))
    }

    /// Elementwise `mul·x + add`.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let ta = self.val(a.0);
        let data: Vec<f64> = ta.data().iter().map(|&x| mul * x + add).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(Op::Affine { a: a.0, mul }, value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.affine(a, c, 0.0)
    }

    /// Broadcast-add a row vector to every row of a matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.val(a.0), self.val(row.0));
        let cols = ta.cols();
        if tr.numel() != cols {
            return Err(Error::Dimension {
                op: "add_row",
                detail: format!("row {:?} does not broadcast over {:?}", tr.shape(), ta.shape()),
            });
        }
        let rdata = tr.data();
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (x, r) in chunk.iter_mut().zip(rdata) {
                *x += r;
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow { a: a.0, row: row.0 }, value))
    }

    fn unary(&mut self, a: Var, kind: UnaryKind, f: impl Fn(f64) -> f64) -> Var {
        let ta = self.val(a.0);
        let data: Vec<f64> = ta.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(Op::Unary { a: a.0, kind }, value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, UnaryKind::Tanh, libm::tanh)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, UnaryKind::Sin, libm::sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, UnaryKind::Cos, libm::cos)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, UnaryKind::Square, |x| x * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, UnaryKind::Sigmoid, sigmoid)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, UnaryKind::Gelu, gelu)
    }

    /// Row-wise softmax over the trailing dimension, with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.val(a.0);
        let cols = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = libm::exp(*x - max);
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(Op::SoftmaxRows { a: a.0 }, value)
    }

    /// Per-row normalization to zero mean and unit variance, then an affine
    /// map by `gain` and `bias`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Result<Var> {
        let (ta, tg, tb) = (self.val(a.0), self.val(gain.0), self.val(bias.0));
        let cols = ta.cols();
        if tg.numel() != cols || tb.numel() != cols {
            return Err(Error::Dimension {
                op: "layer_norm",
                detail: format!(
                    "gain {:?} / bias {:?} do not match row width of {:?}",
                    tg.shape(),
                    tb.shape(),
                    ta.shape()
                ),
            });
        }
        let (g, b) = (tg.data(), tb.data());
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols) {
            let (mean, inv_sd) = row_moments(row);
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - mean) * inv_sd * g[j] + b[j];
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::LayerNorm { a: a.0, gain: gain.0, bias: bias.0 }, value))
    }

    /// Gather rows by index (embedding lookup, mask-position selection).
    pub fn take_rows(&mut self, a: Var, ids: &[usize]) -> Result<Var> {
        let ta = self.val(a.0);
        let (rows, cols) = (ta.rows(), ta.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Contract(format!(
                "take_rows index {bad} out of range for {rows} rows"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(&ta.data()[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::matrix(ids.len(), cols, data)?;
        Ok(self.push(Op::TakeRows { a: a.0, ids: ids.to_vec() }, value))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.val(a.0);
        let (rows, cols) = (ta.rows(), ta.cols());
        if start + len > rows {
            return Err(Error::Contract(format!(
                "slice_rows {start}..{} out of range for {rows} rows",
                start + len
            )));
        }
        let data = ta.data()[start * cols..(start + len) * cols].to_vec();
        let value = Tensor::matrix(len, cols, data)?;
        Ok(self.push(Op::SliceRows { a: a.0, start, len }, value))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows of zero parts".into()));
        }
        let cols = self.val(parts[0].0).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.val(p.0);
            if t.cols() != cols {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    detail: format!("column widths disagree: {} vs {}", cols, t.cols()),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows { parts: parts.iter().map(|v| v.0).collect() }, value))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols of zero parts".into()));
        }
        let rows = self.val(parts[0].0).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.val(p.0).cols()).collect();
        for &p in parts {
            if self.val(p.0).rows() != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    detail: format!("row counts disagree: {} vs {}", rows, self.val(p.0).rows()),
                });
            }
        }
        let cols: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * cols];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.val(p.0).data();
            for r in 0..rows {
                data[r * cols + offset..r * cols + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(Op::ConcatCols { parts: parts.iter().map(|v| v.0).collect() }, value))
    }

    /// Top-left `size`×`size` block of a square matrix.
    pub fn block_top_left(&mut self, a: Var, size: usize) -> Result<Var> {
        let ta = self.val(a.0);
        let (rows, cols) = (ta.rows(), ta.cols());
        if size > rows || size > cols {
            return Err(Error::Contract(format!(
                "block of size {size} exceeds matrix {rows}×{cols}"
            )));
        }
        let mut data = Vec::with_capacity(size * size);
        for r in 0..size {
            data.extend_from_slice(&ta.data()[r * cols..r * cols + size]);
        }
        let value = Tensor::matrix(size, size, data)?;
        Ok(self.push(Op::BlockTopLeft { a: a.0, size }, value))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.val(a.0).data().iter().sum();
        self.push(Op::Sum { a: a.0 }, Tensor::scalar(total))
    }

    pub fn frobenius_norm(&mut self, a: Var) -> Var {
        let sq: f64 = self.val(a.0).data().iter().map(|&x| x * x).sum();
        self.push(Op::FrobeniusNorm { a: a.0 }, Tensor::scalar(libm::sqrt(sq)))
    }

    /// Binary cross-entropy: per-row sum over labels, mean over rows.
    /// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before
    /// the logs.
    pub fn bce_mean(&mut self, probs: Var, targets: &Tensor) -> Result<Var> {
        let tp = self.val(probs.0);
        if tp.shape() != targets.shape() {
            return Err(Error::Dimension {
                op: "bce_mean",
                detail: format!("shapes disagree: {:?} vs {:?}", tp.shape(), targets.shape()),
            });
        }
        let rows = tp.rows() as f64;
        let mut total = 0.0;
        for (&p, &y) in tp.data().iter().zip(targets.data()) {
            let pc = clamp_prob(p);
            total -= y * libm::log(pc) + (1.0 - y) * libm::log(1.0 - pc);
        }
        let value = Tensor::scalar(total / rows);
        Ok(self.push(Op::BceMean { probs: probs.0, targets: targets.clone() }, value))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. After this returns, every
    /// node reachable from `loss` carries its gradient; unreachable nodes
    /// read back as zeros via [`Tape::grad_or_zeros`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = self.nodes[idx].grad.clone() else { continue };
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &g);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: usize, delta: &[f64]) {
        let node = &mut self.nodes[id];
        let grad = node.grad.get_or_insert_with(|| vec![0.0; node.value.numel()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn propagate(&mut self, out: usize, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let ta = self.val(*a);
                let tb = self.val(*b);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let mut da = vec![0.0; m * k];
                mm_nt_acc(g, tb.data(), &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                mm_tn_acc(ta.data(), g, &mut db, k, m, n);
                self.add_grad(*a, &da);
                self.add_grad(*b, &db);
            }
            Op::MatmulNT { a, b } => {
                let ta = self.val(*a);
                let tb = self.val(*b);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                let mut da = vec![0.0; m * k];
                mm_acc(g, tb.data(), &mut da, m, n, k);
                let mut db = vec![0.0; n * k];
                mm_tn_acc(g, ta.data(), &mut db, n, m, k);
                self.add_grad(*a, &da);
                self.add_grad(*b, &db);
            }
            Op::Add { a, b } => {
                self.add_grad(*a, g);
                self.add_grad(*b, g);
            }
            Op::Mul { a, b } => {
                let da: Vec<f64> = g.iter().zip(self.val(*b).data()).map(|(&g, &y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(self.val(*a).data()).map(|(&g, &x)| g * x).collect();
                self.add_grad(*a, &da);
                self.add_grad(*b, &db);
            }
            Op::Affine { a, mul } => {
                let da: Vec<f64> = g.iter().map(|&g| g * mul).collect();
                self.add_grad(*a, &da);
            }
            Op::AddRow { a, row } => {
                let cols = self.val(*row).numel();
                let mut drow = vec![0.0; cols];
                for chunk in g.chunks(cols) {
                    for (d, &gv) in drow.iter_mut().zip(chunk) {
                        *d += gv;
                    }
                }
                self.add_grad(*a, g);
                self.add_grad(*row, &drow);
            }
            Op::Unary { a, kind } => {
                let x = self.val(*a).data();
                let y = self.nodes[out].value.data();
                let da: Vec<f64> = match kind {
                    UnaryKind::Tanh => g.iter().zip(y).map(|(&g, &y)| g * (1.0 - y * y)).collect(),
                    UnaryKind::Sin => g.iter().zip(x).map(|(&g, &x)| g * libm::cos(x)).collect(),
                    UnaryKind::Cos => g.iter().zip(x).map(|(&g, &x)| -g * libm::sin(x)).collect(),
                    UnaryKind::Square => g.iter().zip(x).map(|(&g, &x)| g * 2.0 * x).collect(),
                    UnaryKind::Sigmoid => {
                        g.iter().zip(y).map(|(&g, &y)| g * y * (1.0 - y)).collect()
                    }
                    UnaryKind::Gelu => g.iter().zip(x).map(|(&g, &x)| g * gelu_deriv(x)).collect(),
                };
                self.add_grad(*a, &da);
            }
            Op::SoftmaxRows { a } => {
                let y = self.nodes[out].value.data();
                let cols = self.nodes[out].value.cols();
                let mut da = vec![0.0; y.len()];
                for (r, gr) in g.chunks(cols).enumerate() {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let dot: f64 = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum();
                    for j in 0..cols {
                        da[r * cols + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.add_grad(*a, &da);
            }
            Op::LayerNorm { a, gain, bias } => {
                let x = self.val(*a).data().to_vec();
                let gains = self.val(*gain).data().to_vec();
                let cols = gains.len();
                let rows = x.len() / cols;
                let mut da = vec![0.0; x.len()];
                let mut dgain = vec![0.0; cols];
                let mut dbias = vec![0.0; cols];
                for r in 0..rows {
                    let xr = &x[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let (mean, inv_sd) = row_moments(xr);
                    // normalized row and the two reduction terms
                    let mut dxhat = vec![0.0; cols];
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for j in 0..cols {
                        let xhat = (xr[j] - mean) * inv_sd;
                        dgain[j] += gr[j] * xhat;
                        dbias[j] += gr[j];
                        dxhat[j] = gr[j] * gains[j];
                        mean_dxhat += dxhat[j];
                        mean_dxhat_xhat += dxhat[j] * xhat;
                    }
                    mean_dxhat /= cols as f64;
                    mean_dxhat_xhat /= cols as f64;
                    for j in 0..cols {
                        let xhat = (xr[j] - mean) * inv_sd;
                        da[r * cols + j] =
                            (dxhat[j] - mean_dxhat - xhat * mean_dxhat_xhat) * inv_sd;
                    }
                }
                self.add_grad(*a, &da);
                self.add_grad(*gain, &dgain);
                self.add_grad(*bias, &dbias);
            }
            Op::TakeRows { a, ids } => {
                let cols = self.nodes[out].value.cols();
                let mut da = vec![0.0; self.val(*a).numel()];
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..cols {
                        da[id * cols + j] += g[i * cols + j];
                    }
                }
                self.add_grad(*a, &da);
            }
            Op::SliceRows { a, start, len } => {
                let cols = self.nodes[out].value.cols();
                let mut da = vec![0.0; self.val(*a).numel()];
                da[start * cols..(start + len) * cols].copy_from_slice(g);
                self.add_grad(*a, &da);
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.val(p).numel();
                    let slice = g[offset..offset + n].to_vec();
                    self.add_grad(p, &slice);
                    offset += n;
                }
            }
            Op::ConcatCols { parts } => {
                let rows = self.nodes[out].value.rows();
                let cols = self.nodes[out].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.val(p).cols();
                    let mut dp = vec![0.0; rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * cols + offset..r * cols + offset + w]);
                    }
                    self.add_grad(p, &dp);
                    offset += w;
                }
            }
            Op::BlockTopLeft { a, size } => {
                let cols = self.val(*a).cols();
                let mut da = vec![0.0; self.val(*a).numel()];
                for r in 0..*size {
                    da[r * cols..r * cols + size].copy_from_slice(&g[r * size..(r + 1) * size]);
                }
                self.add_grad(*a, &da);
            }
            Op::Sum { a } => {
                let da = vec![g[0]; self.val(*a).numel()];
                self.add_grad(*a, &da);
            }
            Op::FrobeniusNorm { a } => {
                let norm = self.nodes[out].value.item();
                if norm > 0.0 {
                    let da: Vec<f64> =
                        self.val(*a).data().iter().map(|&x| g[0] * x / norm).collect();
                    self.add_grad(*a, &da);
                }
            }
            Op::BceMean { probs, targets } => {
                let p = self.val(*probs).data();
                let rows = self.val(*probs).rows() as f64;
                let da: Vec<f64> = p
                    .iter()
                    .zip(targets.data())
                    .map(|(&p, &y)| {
                        if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                            // inside the clamp plateau the op is constant
                            0.0
                        } else {
                            g[0] * (-y / p + (1.0 - y) / (1.0 - p)) / rows
                        }
                    })
                    .collect();
                self.add_grad(*probs, &da);
            }
        }
    }
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / libm::sqrt(var + LAYER_NORM_EPS))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Exact (erf-based) gaussian error linear unit.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_deriv(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = INV_SQRT_2PI * libm::exp(-0.5 * x * x);
    cdf + x * pdf
}
