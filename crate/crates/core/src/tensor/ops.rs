//! Row-wise kernels shared by forward and backward rules.

use alloc::vec;
use alloc::vec::Vec;

use super::Real;

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus<R: Real>(x: R) -> R {
    if x > R::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary entropy in nats; `0 ln 0 = 0`.
#[inline]
pub(crate) fn binary_entropy<R: Real>(p: R) -> R {
    let xlogx = |q: R| if q <= R::zero() { R::zero() } else { q * q.ln() };
    -(xlogx(p) + xlogx(R::one() - p))
}

/// Normalizes each row to zero mean and unit variance. Returns `(xhat, rstd)`.
pub(crate) fn layer_norm_rows<R: Real>(x: &[R], cols: usize) -> (Vec<R>, Vec<R>) {
    let eps = R::from_f64(LAYER_NORM_EPS);
    let n = R::from_f64(cols as f64);
    let mut out = vec![R::zero(); x.len()];
    let mut rstds = Vec::with_capacity(x.len() / cols);
    for (row, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let mean = row.iter().fold(R::zero(), |acc, &v| acc + v) / n;
        let var = row.iter().fold(R::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
        let rstd = R::one() / (var + eps).sqrt();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - mean) * rstd;
        }
        rstds.push(rstd);
    }
    (out, rstds)
}

pub(crate) fn layer_norm_backward<R: Real>(xhat: &[R], rstd: &[R], grad: &[R], cols: usize) -> Vec<R> {
    let n = R::from_f64(cols as f64);
    let mut dx = vec![R::zero(); xhat.len()];
    for (r, ((xh, g), d)) in xhat
        .chunks_exact(cols)
        .zip(grad.chunks_exact(cols))
        .zip(dx.chunks_exact_mut(cols))
        .enumerate()
    {
        let mean_g = g.iter().fold(R::zero(), |acc, &v| acc + v) / n;
        let mean_gx = g.iter().zip(xh).fold(R::zero(), |acc, (&gv, &xv)| acc + gv * xv) / n;
        for ((dv, &gv), &xv) in d.iter_mut().zip(g).zip(xh) {
            *dv = rstd[r] * (gv - mean_g - xv * mean_gx);
        }
    }
    dx
}

pub(crate) fn softmax_rows_in_place<R: Real>(x: &mut [R], cols: usize) {
    for row in x.chunks_exact_mut(cols) {
        let max = row.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
        let mut total = R::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
}

pub(crate) fn softmax_backward_in_place<R: Real>(y: &[R], grad: &mut [R], cols: usize) {
    for (yr, gr) in y.chunks_exact(cols).zip(grad.chunks_exact_mut(cols)) {
        let dot = yr.iter().zip(gr.iter()).fold(R::zero(), |acc, (&a, &b)| acc + a * b);
        for (g, &yv) in gr.iter_mut().zip(yr) {
            *g = yv * (*g - dot);
        }
    }
}

/// Geometry of a multi-head attention call over `[batch, seq, width]` inputs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnDims {
    pub batch: usize,
    pub seq: usize,
    pub width: usize,
    pub heads: usize,
}

impl AttnDims {
    fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    fn offset(&self, b: usize, h: usize) -> usize {
        b * self.seq * self.width + h * self.head_dim()
    }

    fn probs_offset(&self, b: usize, h: usize) -> usize {
        (b * self.heads + h) * self.seq * self.seq
    }
}

/// Scaled dot-product attention. Returns `(output, probabilities)`.
pub(crate) fn attention_forward<R: Real>(q: &[R], k: &[R], v: &[R], dims: AttnDims) -> (Vec<R>, Vec<R>) {
    let AttnDims {
        batch,
        seq,
        width,
        heads,
    } = dims;
    let dh = dims.head_dim();
    let scale = R::one() / R::from_f64(dh as f64).sqrt();
    let w = width as isize;
    let mut probs = vec![R::zero(); batch * heads * seq * seq];
    let mut out = vec![R::zero(); q.len()];
    for b in 0..batch {
        for h in 0..heads {
            let off = dims.offset(b, h);
            let poff = dims.probs_offset(b, h);
            R::gemm(
                seq,
                dh,
                seq,
                scale,
                (q, off, w, 1),
                (k, off, 1, w),
                R::zero(),
                (&mut probs, poff, seq as isize, 1),
            );
            softmax_rows_in_place(&mut probs[poff..poff + seq * seq], seq);
            R::gemm(
                seq,
                seq,
                dh,
                R::one(),
                (&probs, poff, seq as isize, 1),
                (v, off, w, 1),
                R::zero(),
                (&mut out, off, w, 1),
            );
        }
    }
    (out, probs)
}

/// Returns `(dq, dk, dv)`.
pub(crate) fn attention_backward<R: Real>(
    q: &[R],
    k: &[R],
    v: &[R],
    probs: &[R],
    grad: &[R],
    dims: AttnDims,
) -> (Vec<R>, Vec<R>, Vec<R>) {
    let AttnDims {
        batch,
        seq,
        width,
        heads,
    } = dims;
    let dh = dims.head_dim();
    let scale = R::one() / R::from_f64(dh as f64).sqrt();
    let w = width as isize;
    let s = seq as isize;
    let mut dq = vec![R::zero(); q.len()];
    let mut dk = vec![R::zero(); k.len()];
    let mut dv = vec![R::zero(); v.len()];
    let mut dscores = vec![R::zero(); seq * seq];
    for b in 0..batch {
        for h in 0..heads {
            let off = dims.offset(b, h);
            let poff = dims.probs_offset(b, h);
            let p = &probs[poff..poff + seq * seq];
            // dV = P^T dO
            R::gemm(
                seq,
                seq,
                dh,
                R::one(),
                (p, 0, 1, s),
                (grad, off, w, 1),
                R::zero(),
                (&mut dv, off, w, 1),
            );
            // dP = dO V^T
            R::gemm(
                seq,
                dh,
                seq,
                R::one(),
                (grad, off, w, 1),
                (v, off, 1, w),
                R::zero(),
                (&mut dscores, 0, s, 1),
            );
            softmax_backward_in_place(p, &mut dscores, seq);
            // dQ = scale * dS K, dK = scale * dS^T Q
            R::gemm(
                seq,
                seq,
                dh,
                scale,
                (&dscores, 0, s, 1),
                (k, off, w, 1),
                R::zero(),
                (&mut dq, off, w, 1),
            );
            R::gemm(
                seq,
                seq,
                dh,
                scale,
                (&dscores, 0, 1, s),
                (q, off, w, 1),
                R::zero(),
                (&mut dk, off, w, 1),
            );
        }
    }
    (dq, dk, dv)
}

/// Factorized per-bit entropy objective over `[batch, bits]` logits.
///
/// `p = sigmoid(2 e / tau)`; returns mean per-sample bit entropy minus mean
/// entropy of the batch-averaged bit probabilities, in nats.
pub(crate) fn bit_entropy_forward<R: Real>(e: &[R], batch: usize, tau: R) -> R {
    let bits = e.len() / batch;
    let two = R::from_f64(2.0);
    let mut conditional = R::zero();
    let mut marginal_p = vec![R::zero(); bits];
    for row in e.chunks_exact(bits) {
        for (m, &v) in marginal_p.iter_mut().zip(row) {
            let x = two * v / tau;
            let p = sigmoid(x);
            // h(p) = p softplus(-x) + (1 - p) softplus(x)
            conditional = conditional + p * softplus(-x) + (R::one() - p) * softplus(x);
            *m = *m + p;
        }
    }
    let nb = R::from_f64(batch as f64);
    let nk = R::from_f64(bits as f64);
    let marginal = marginal_p
        .iter()
        .fold(R::zero(), |acc, &m| acc + binary_entropy(m / nb));
    conditional / (nb * nk) - marginal / nk
}

pub(crate) fn bit_entropy_backward<R: Real>(e: &[R], batch: usize, tau: R, grad: R) -> Vec<R> {
    let bits = e.len() / batch;
    let two = R::from_f64(2.0);
    let nb = R::from_f64(batch as f64);
    let nk = R::from_f64(bits as f64);
    let mut marginal_p = vec![R::zero(); bits];
    for row in e.chunks_exact(bits) {
        for (m, &v) in marginal_p.iter_mut().zip(row) {
            *m = *m + sigmoid(two * v / tau);
        }
    }
    let tiny = R::from_f64(1e-12);
    let marginal_logit: Vec<R> = marginal_p
        .iter()
        .map(|&m| {
            let m = (m / nb).max(tiny).min(R::one() - tiny);
            ((R::one() - m) / m).ln()
        })
        .collect();
    let mut out = vec![R::zero(); e.len()];
    for (row, drow) in e.chunks_exact(bits).zip(out.chunks_exact_mut(bits)) {
        for ((d, &v), &ml) in drow.iter_mut().zip(row).zip(&marginal_logit) {
            let x = two * v / tau;
            let p = sigmoid(x);
            let dp_de = two / tau * p * (R::one() - p);
            // dh/dp = ln((1 - p) / p) = -x
            let d_cond = -x * dp_de / (nb * nk);
            let d_marg = ml * dp_de / (nb * nk);
            *d = grad * (d_cond - d_marg);
        }
    }
    out
}
