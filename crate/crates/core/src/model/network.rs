//! Transformer encoder and AdaLN-conditioned velocity decoder.

use num_traits::Float;

use super::params::{DecoderBlock, EncoderBlock, Layout, Linear, Norm};
use super::TokenizerConfig;
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};

type Result<T> = core::result::Result<T, TensorError>;

fn linear<R: Real>(t: &mut Tape<R>, x: Var, l: Linear, p: &[Var]) -> Result<Var> {
    let y = t.matmul(x, p[l.weight])?;
    t.add(y, p[l.bias])
}

fn affine_norm<R: Real>(t: &mut Tape<R>, x: Var, n: Norm, p: &[Var]) -> Result<Var> {
    let y = t.layer_norm(x);
    let y = t.mul(y, p[n.gain])?;
    t.add(y, p[n.bias])
}

fn self_attention<R: Real>(
    t: &mut Tape<R>,
    x: Var,
    qkv: Linear,
    out: Linear,
    width: usize,
    heads: usize,
    p: &[Var],
) -> Result<Var> {
    let h = linear(t, x, qkv, p)?;
    let q = t.narrow_last(h, 0, width)?;
    let k = t.narrow_last(h, width, width)?;
    let v = t.narrow_last(h, 2 * width, width)?;
    let a = t.attention(q, k, v, heads)?;
    linear(t, a, out, p)
}

fn mlp<R: Real>(t: &mut Tape<R>, x: Var, fc1: Linear, fc2: Linear, p: &[Var]) -> Result<Var> {
    let h = linear(t, x, fc1, p)?;
    let h = t.silu(h);
    linear(t, h, fc2, p)
}

fn encoder_block<R: Real>(t: &mut Tape<R>, x: Var, b: &EncoderBlock, c: &TokenizerConfig, p: &[Var]) -> Result<Var> {
    let h = affine_norm(t, x, b.norm1, p)?;
    let h = self_attention(t, h, b.qkv, b.attn_out, c.width, c.heads, p)?;
    let x = t.add(x, h)?;
    let h = affine_norm(t, x, b.norm2, p)?;
    let h = mlp(t, h, b.fc1, b.fc2, p)?;
    t.add(x, h)
}

/// `actions` is `[B, H, S]`; returns the continuous latent `[B, L, D]`.
pub(crate) fn encode<R: Real>(
    t: &mut Tape<R>,
    layout: &Layout,
    c: &TokenizerConfig,
    p: &[Var],
    actions: Var,
) -> Result<Var> {
    let batch = t.shape(actions)[0];
    let x = linear(t, actions, layout.enc_input, p)?;
    let zeros = t.constant(Tensor::zeros(&[batch, c.code_length, c.width]));
    let queries = t.add(zeros, p[layout.enc_queries])?;
    let x = t.concat_rows(x, queries)?;
    let mut x = t.add(x, p[layout.enc_pos])?;
    for block in &layout.enc_blocks {
        x = encoder_block(t, x, block, c, p)?;
    }
    let q = t.slice_rows(x, c.horizon, c.code_length)?;
    let q = affine_norm(t, q, layout.enc_norm, p)?;
    linear(t, q, layout.enc_head, p)
}

/// Sinusoidal embedding of flow times in `[0, 1]`, one row per sample.
pub(crate) fn time_embedding<R: Real>(times: &[f64], width: usize) -> Tensor<R> {
    let half = width / 2;
    Tensor::from_fn(&[times.len(), width], |i| {
        let (row, col) = (i / width, i % width);
        let freq = Float::exp(-Float::ln(10_000.0f64) * (col % half) as f64 / half as f64);
        let angle = 1000.0 * times[row] * freq;
        R::from_f64(if col < half {
            Float::cos(angle)
        } else {
            Float::sin(angle)
        })
    })
}

/// `x <- LN(x) * (1 + scale) + shift` on the first `active` rows; the rest
/// only get the plain normalization.
fn modulated_norm<R: Real>(
    t: &mut Tape<R>,
    x: Var,
    shift: Var,
    scale: Var,
    active: usize,
    total: usize,
) -> Result<Var> {
    let h = t.layer_norm(x);
    let s = t.row_expand(scale, active, total, 0.0)?;
    let s = t.add_scalar(s, 1.0);
    let h = t.mul(h, s)?;
    let sh = t.row_expand(shift, active, total, 0.0)?;
    t.add(h, sh)
}

fn decoder_block<R: Real>(
    t: &mut Tape<R>,
    x: Var,
    cond: Var,
    b: &DecoderBlock,
    c: &TokenizerConfig,
    p: &[Var],
) -> Result<Var> {
    let w = c.width;
    let (active, total) = (c.horizon, c.horizon + c.code_length);
    let m = linear(t, cond, b.modulation, p)?;
    let part = |t: &mut Tape<R>, i: usize| t.narrow_last(m, i * w, w);
    let (shift1, scale1, gate1) = (part(t, 0)?, part(t, 1)?, part(t, 2)?);
    let (shift2, scale2, gate2) = (part(t, 3)?, part(t, 4)?, part(t, 5)?);

    let h = modulated_norm(t, x, shift1, scale1, active, total)?;
    let h = self_attention(t, h, b.qkv, b.attn_out, w, c.heads, p)?;
    let g = t.row_expand(gate1, active, total, 1.0)?;
    let h = t.mul(h, g)?;
    let x = t.add(x, h)?;

    let h = modulated_norm(t, x, shift2, scale2, active, total)?;
    let h = mlp(t, h, b.fc1, b.fc2, p)?;
    let g = t.row_expand(gate2, active, total, 1.0)?;
    let h = t.mul(h, g)?;
    t.add(x, h)
}

/// Velocity prediction. `noisy` is `[B, H, S]`, `code` is `[B, L, D]` and
/// `time_emb` is `[B, W]`; returns `[B, H, S]`.
pub(crate) fn decode_velocity<R: Real>(
    t: &mut Tape<R>,
    layout: &Layout,
    c: &TokenizerConfig,
    p: &[Var],
    noisy: Var,
    code: Var,
    time_emb: Var,
) -> Result<Var> {
    let a = linear(t, noisy, layout.dec_input, p)?;
    let k = linear(t, code, layout.code_embed, p)?;
    let x = t.concat_rows(a, k)?;
    let mut x = t.add(x, p[layout.dec_pos])?;

    let cond = linear(t, time_emb, layout.time_fc1, p)?;
    let cond = t.silu(cond);
    let cond = linear(t, cond, layout.time_fc2, p)?;
    let cond = t.silu(cond);

    for block in &layout.dec_blocks {
        x = decoder_block(t, x, cond, block, c, p)?;
    }
    let x = t.slice_rows(x, 0, c.horizon)?;
    let x = affine_norm(t, x, layout.dec_norm, p)?;
    linear(t, x, layout.dec_head, p)
}
