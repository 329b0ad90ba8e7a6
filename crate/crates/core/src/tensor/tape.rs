use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, AttnDims};
use super::{Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<R> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    AddScalar(Var),
    Silu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        rstd: Vec<R>,
    },
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
    SignSte(Var),
    Reshape(Var),
    Concat(Var, Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    NarrowLast {
        x: Var,
        start: usize,
    },
    RowExpand {
        x: Var,
        active: usize,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<R>,
    },
    BitEntropy {
        e: Var,
        batch: usize,
        tau: R,
    },
}

struct Node<R> {
    value: Tensor<R>,
    op: Op<R>,
    requires_grad: bool,
}

/// Records differentiable operations for one forward/backward pass.
///
/// Single-use: [`backward`](Tape::backward) consumes the recorded rules and a
/// second call fails with [`TensorError::TapeConsumed`].
pub struct Tape<R> {
    nodes: Vec<Node<R>>,
    grads: Vec<Option<Vec<R>>>,
    consumed: bool,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

/// `b` broadcasts over `a` when its shape is a suffix of `a`'s shape.
fn check_suffix(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), TensorError> {
    if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
        Ok(())
    } else {
        Err(mismatch(op, a, b))
    }
}

/// Splits `[.., n, w]` into `(outer, n, w)`.
fn seq_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    if shape.len() < 2 {
        return None;
    }
    let w = shape[shape.len() - 1];
    let n = shape[shape.len() - 2];
    let outer = shape[..shape.len() - 2].iter().product();
    Some((outer, n, w))
}

fn reduce_broadcast<R: Real>(grad: &[R], len: usize) -> Vec<R> {
    if grad.len() == len {
        return grad.to_vec();
    }
    let mut out = vec![R::zero(); len];
    for chunk in grad.chunks_exact(len) {
        for (o, &g) in out.iter_mut().zip(chunk) {
            *o = *o + g;
        }
    }
    out
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<R>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor<R>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies `x` into a new constant leaf, blocking gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, x: Var) -> &Tensor<R> {
        &self.nodes[x.0].value
    }

    pub fn shape(&self, x: Var) -> &[usize] {
        self.nodes[x.0].value.shape()
    }

    /// Accumulated gradient, available after [`backward`](Tape::backward).
    pub fn grad(&self, x: Var) -> Option<&[R]> {
        self.grads[x.0].as_deref()
    }

    pub fn grad_tensor(&self, x: Var) -> Option<Tensor<R>> {
        let shape = self.shape(x).to_vec();
        self.grad(x)
            .map(|g| Tensor::new(&shape, g.to_vec()).expect("gradient matches value shape"))
    }

    /// `a[.., k] x b[k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (self.value(a).rows(), sb[0], sb[1]);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        let mut out = vec![R::zero(); m * n];
        R::gemm(
            m,
            k,
            n,
            R::one(),
            (self.value(a).data(), 0, k as isize, 1),
            (self.value(b).data(), 0, n as isize, 1),
            R::zero(),
            (&mut out, 0, n as isize, 1),
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor { shape, data: out }, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(R, R) -> R,
    ) -> Result<(Tensor<R>, bool), TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        check_suffix(op, va.shape(), vb.shape())?;
        let data = broadcast_map(va.data(), vb.data(), f);
        let shape = va.shape().to_vec();
        Ok((Tensor { shape, data }, self.needs(&[a, b])))
    }

    /// Elementwise sum; `b` may broadcast over leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (t, rg) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (t, rg) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (t, rg) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(R) -> R, op: Op<R>) -> Var {
        let v = self.value(x);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|&e| f(e)).collect(),
        };
        let rg = self.needs(&[x]);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = R::from_f64(s);
        self.unary(x, |e| e * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = R::from_f64(c);
        self.unary(x, |e| e + c, Op::AddScalar(x))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, |e| e * ops::sigmoid(e), Op::Silu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, ops::sigmoid, Op::Sigmoid(x))
    }

    /// Elementwise sign with `sign(0) = +1`; gradient passes straight through.
    pub fn sign_ste(&mut self, x: Var) -> Var {
        self.unary(x, |e| if e >= R::zero() { R::one() } else { -R::one() }, Op::SignSte(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let cols = v.cols();
        let mut data = v.data().to_vec();
        ops::softmax_rows_in_place(&mut data, cols);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data,
        };
        let rg = self.needs(&[x]);
        self.push(t, Op::Softmax(x), rg)
    }

    /// Normalizes the last axis to zero mean, unit variance (eps 1e-5), no affine.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (data, rstd) = ops::layer_norm_rows(v.data(), v.cols());
        let t = Tensor {
            shape: v.shape().to_vec(),
            data,
        };
        let rg = self.needs(&[x]);
        self.push(t, Op::LayerNorm { x, rstd }, rg)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(pred), self.value(target));
        if a.shape() != b.shape() {
            return Err(mismatch("mse", a.shape(), b.shape()));
        }
        let total = a
            .data()
            .iter()
            .zip(b.data())
            .fold(R::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
        let value = total / R::from_f64(a.numel() as f64);
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(value), Op::Mse(pred, target), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().fold(R::zero(), |acc, &v| acc + v);
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let total = v.data().iter().fold(R::zero(), |acc, &e| acc + e);
        let mean = total / R::from_f64(v.numel() as f64);
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(mean), Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Concatenates `[.., n1, w]` and `[.., n2, w]` along the second-to-last axis.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (da, db) = match (seq_dims(sa), seq_dims(sb)) {
            (Some(da), Some(db)) if sa.len() == sb.len() && da.0 == db.0 && da.2 == db.2 => (da, db),
            _ => return Err(mismatch("concat_rows", sa, sb)),
        };
        let (outer, n1, w) = da;
        let n2 = db.1;
        let mut shape = sa.to_vec();
        let rank = shape.len();
        shape[rank - 2] = n1 + n2;
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(outer * (n1 + n2) * w);
        for o in 0..outer {
            data.extend_from_slice(&xa[o * n1 * w..(o + 1) * n1 * w]);
            data.extend_from_slice(&xb[o * n2 * w..(o + 1) * n2 * w]);
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor { shape, data }, Op::Concat(a, b), rg))
    }

    /// Rows `start..start + len` of the second-to-last axis.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(x);
        let (outer, n, w) = seq_dims(s).ok_or_else(|| mismatch("slice_rows", s, &[start, len]))?;
        if len == 0 || start + len > n {
            return Err(TensorError::InvalidArgument {
                op: "slice_rows",
                reason: format!("rows {start}..{} out of {n}", start + len),
            });
        }
        let mut shape = s.to_vec();
        let rank = shape.len();
        shape[rank - 2] = len;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * w);
        for o in 0..outer {
            let base = (o * n + start) * w;
            data.extend_from_slice(&src[base..base + len * w]);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::SliceRows { x, start }, rg))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn narrow_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let v = self.value(x);
        let cols = v.cols();
        if len == 0 || start + len > cols {
            return Err(TensorError::InvalidArgument {
                op: "narrow_last",
                reason: format!("columns {start}..{} out of {cols}", start + len),
            });
        }
        let mut shape = v.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let data = v
            .data()
            .chunks_exact(cols)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::NarrowLast { x, start }, rg))
    }

    /// Expands `[b, w]` to `[b, total, w]`: the first `active` rows of each
    /// batch entry copy `x[b]`, the remaining rows hold `fill`.
    pub fn row_expand(&mut self, x: Var, active: usize, total: usize, fill: f64) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if s.len() != 2 || active > total || total == 0 {
            return Err(TensorError::InvalidArgument {
                op: "row_expand",
                reason: format!("shape {s:?}, active {active}, total {total}"),
            });
        }
        let (b, w) = (s[0], s[1]);
        let fill = R::from_f64(fill);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(b * total * w);
        for row in src.chunks_exact(w) {
            for _ in 0..active {
                data.extend_from_slice(row);
            }
            data.extend(core::iter::repeat_n(fill, (total - active) * w));
        }
        let rg = self.needs(&[x]);
        let t = Tensor {
            shape: vec![b, total, w],
            data,
        };
        Ok(self.push(t, Op::RowExpand { x, active }, rg))
    }

    /// Multi-head scaled dot-product self-attention over `[.., seq, width]`
    /// query/key/value tensors. No masking.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var, TensorError> {
        let sq = self.shape(q);
        if sq != self.shape(k) || sq != self.shape(v) {
            return Err(mismatch("attention", sq, self.shape(k)));
        }
        let (batch, seq, width) = seq_dims(sq).ok_or_else(|| mismatch("attention", sq, self.shape(k)))?;
        if heads == 0 || width % heads != 0 {
            return Err(TensorError::InvalidArgument {
                op: "attention",
                reason: format!("width {width} not divisible into {heads} heads"),
            });
        }
        let dims = AttnDims {
            batch,
            seq,
            width,
            heads,
        };
        let (out, probs) =
            ops::attention_forward(self.value(q).data(), self.value(k).data(), self.value(v).data(), dims);
        let shape = sq.to_vec();
        let rg = self.needs(&[q, k, v]);
        Ok(self.push(Tensor { shape, data: out }, Op::Attention { q, k, v, heads, probs }, rg))
    }

    /// Factorized per-bit entropy gap of `[batch, ..]` logits (scalar, nats).
    pub fn bit_entropy(&mut self, e: Var, tau: f64) -> Result<Var, TensorError> {
        let s = self.shape(e);
        if s.len() < 2 || s[0] < 2 {
            return Err(TensorError::InvalidArgument {
                op: "bit_entropy",
                reason: format!("needs a batch of at least 2, got shape {s:?}"),
            });
        }
        if tau <= 0.0 {
            return Err(TensorError::InvalidArgument {
                op: "bit_entropy",
                reason: format!("temperature must be positive, got {tau}"),
            });
        }
        let batch = s[0];
        let tau = R::from_f64(tau);
        let value = ops::bit_entropy_forward(self.value(e).data(), batch, tau);
        let rg = self.needs(&[e]);
        Ok(self.push(Tensor::scalar(value), Op::BitEntropy { e, batch, tau }, rg))
    }

    fn accumulate(&mut self, x: Var, contribution: Vec<R>) {
        if !self.nodes[x.0].requires_grad {
            return;
        }
        match &mut self.grads[x.0] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a = *a + b;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        self.consumed = true;
        if self.nodes[loss.0].requires_grad {
            self.accumulate(loss, vec![R::one()]);
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let op = core::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backward_node(i, &op, &g);
            self.nodes[i].op = op;
            self.grads[i] = Some(g);
        }
        for i in 0..self.nodes.len() {
            if self.nodes[i].requires_grad && matches!(self.nodes[i].op, Op::Leaf) && self.grads[i].is_none() {
                self.grads[i] = Some(vec![R::zero(); self.nodes[i].value.numel()]);
            }
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, op: &Op<R>, g: &[R]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).cols();
                let mut da = vec![R::zero(); m * k];
                let mut db = vec![R::zero(); k * n];
                if self.nodes[a.0].requires_grad {
                    R::gemm(
                        m,
                        n,
                        k,
                        R::one(),
                        (g, 0, n as isize, 1),
                        (self.value(b).data(), 0, 1, n as isize),
                        R::zero(),
                        (&mut da, 0, k as isize, 1),
                    );
                }
                if self.nodes[b.0].requires_grad {
                    R::gemm(
                        k,
                        m,
                        n,
                        R::one(),
                        (self.value(a).data(), 0, 1, k as isize),
                        (g, 0, n as isize, 1),
                        R::zero(),
                        (&mut db, 0, n as isize, 1),
                    );
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let nb = self.value(b).numel();
                let mut db = reduce_broadcast(g, nb);
                if matches!(op, Op::Sub(..)) {
                    db.iter_mut().for_each(|v| *v = -*v);
                }
                self.accumulate(a, g.to_vec());
                self.accumulate(b, db);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let nb = vb.len();
                let da = broadcast_map(g, vb, |gv, bv| gv * bv);
                let prod: Vec<R> = g.iter().zip(va).map(|(&gv, &av)| gv * av).collect();
                let db = reduce_broadcast(&prod, nb);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Scale(x, s) => self.accumulate(x, g.iter().map(|&v| v * s).collect()),
            Op::AddScalar(x) | Op::SignSte(x) | Op::Reshape(x) => self.accumulate(x, g.to_vec()),
            Op::Silu(x) => {
                let dx = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&xv, &gv)| {
                        let s = ops::sigmoid(xv);
                        gv * s * (R::one() + xv * (R::one() - s))
                    })
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = self.nodes[i]
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gv)| gv * y * (R::one() - y))
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Softmax(x) => {
                let y = &self.nodes[i].value;
                let mut dx = g.to_vec();
                ops::softmax_backward_in_place(y.data(), &mut dx, y.cols());
                self.accumulate(x, dx);
            }
            Op::LayerNorm { x, ref rstd } => {
                let y = &self.nodes[i].value;
                let dx = ops::layer_norm_backward(y.data(), rstd, g, y.cols());
                self.accumulate(x, dx);
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let c = R::from_f64(2.0) * g[0] / R::from_f64(va.len() as f64);
                let da: Vec<R> = va.iter().zip(vb).map(|(&x, &y)| c * (x - y)).collect();
                let db = da.iter().map(|&v| -v).collect();
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Sum(x) => {
                let n = self.value(x).numel();
                self.accumulate(x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(x).numel();
                self.accumulate(x, vec![g[0] / R::from_f64(n as f64); n]);
            }
            Op::Concat(a, b) => {
                let (_, n1, w) = seq_dims(self.shape(a)).unwrap();
                let n2 = self.shape(b)[self.shape(b).len() - 2];
                let mut da = Vec::with_capacity(self.value(a).numel());
                let mut db = Vec::with_capacity(self.value(b).numel());
                for chunk in g.chunks_exact((n1 + n2) * w) {
                    da.extend_from_slice(&chunk[..n1 * w]);
                    db.extend_from_slice(&chunk[n1 * w..]);
                }
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::SliceRows { x, start } => {
                let (_, n, w) = seq_dims(self.shape(x)).unwrap();
                let len = self.nodes[i].value.shape()[self.nodes[i].value.shape().len() - 2];
                let mut dx = vec![R::zero(); self.value(x).numel()];
                for (o, chunk) in g.chunks_exact(len * w).enumerate() {
                    let base = (o * n + start) * w;
                    dx[base..base + len * w].copy_from_slice(chunk);
                }
                self.accumulate(x, dx);
            }
            Op::NarrowLast { x, start } => {
                let cols = self.value(x).cols();
                let len = self.nodes[i].value.cols();
                let mut dx = vec![R::zero(); self.value(x).numel()];
                for (drow, grow) in dx.chunks_exact_mut(cols).zip(g.chunks_exact(len)) {
                    drow[start..start + len].copy_from_slice(grow);
                }
                self.accumulate(x, dx);
            }
            Op::RowExpand { x, active } => {
                let w = self.value(x).cols();
                let total = self.nodes[i].value.shape()[1];
                let mut dx = vec![R::zero(); self.value(x).numel()];
                for (drow, chunk) in dx.chunks_exact_mut(w).zip(g.chunks_exact(total * w)) {
                    for row in chunk[..active * w].chunks_exact(w) {
                        for (d, &v) in drow.iter_mut().zip(row) {
                            *d = *d + v;
                        }
                    }
                }
                self.accumulate(x, dx);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                ref probs,
            } => {
                let (batch, seq, width) = seq_dims(self.shape(q)).unwrap();
                let dims = AttnDims {
                    batch,
                    seq,
                    width,
                    heads,
                };
                let (dq, dk, dv) = ops::attention_backward(
                    self.value(q).data(),
                    self.value(k).data(),
                    self.value(v).data(),
                    probs,
                    g,
                    dims,
                );
                self.accumulate(q, dq);
                self.accumulate(k, dk);
                self.accumulate(v, dv);
            }
            Op::BitEntropy { e, batch, tau } => {
                let de = ops::bit_entropy_backward(self.value(e).data(), batch, tau, g[0]);
                self.accumulate(e, de);
            }
        }
    }
}

/// `f(a[i], b[i % b.len()])` without per-element division.
fn broadcast_map<R: Copy>(a: &[R], b: &[R], f: impl Fn(R, R) -> R) -> Vec<R> {
    let mut out = Vec::with_capacity(a.len());
    for chunk in a.chunks(b.len()) {
        out.extend(chunk.iter().zip(b).map(|(&x, &y)| f(x, y)));
    }
    out
}
