//! The FACT tokenizer: transformer encoder with zero-initialized queries, a
//! sign (lookup-free) quantizer, and a rectified-flow velocity decoder whose
//! Euler integration turns a code back into an action chunk.

mod code;
mod config;
mod network;
mod params;
mod tokenizer;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use code::{quantize, LatentCode};
pub use config::{TokenizerConfig, MAX_BITS};
pub use params::ModelParams;
pub use tokenizer::FactTokenizer;

use crate::data::DataError;
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};
use params::Layout;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: u64 },
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Straight-line path `(1 - t) z + t a` between noise and data.
pub fn interpolate<R: Real>(noise: &Tensor<R>, action: &Tensor<R>, t: f64) -> Result<Tensor<R>, ModelError> {
    check_time(t)?;
    if noise.shape() != action.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "interpolate",
            lhs: noise.shape().to_vec(),
            rhs: action.shape().to_vec(),
        }
        .into());
    }
    let (a, b) = (R::from_f64(1.0 - t), R::from_f64(t));
    let data = noise
        .data()
        .iter()
        .zip(action.data())
        .map(|(&z, &x)| a * z + b * x)
        .collect();
    Ok(Tensor::new(noise.shape(), data)?)
}

fn check_time(t: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(ModelError::InvalidArgument(format!("flow time {t} outside [0, 1]")))
    }
}

/// Forward Euler from `t = 0` to `t = 1` in `steps` equal increments:
/// `x <- x + dt * v(x, t_k)` with `t_k = k dt`.
pub fn euler_integrate<R: Real, E>(
    x0: Tensor<R>,
    steps: usize,
    mut velocity: impl FnMut(&Tensor<R>, f64) -> Result<Tensor<R>, E>,
) -> Result<Tensor<R>, E> {
    let dt = 1.0 / steps as f64;
    let mut x = x0;
    for k in 0..steps {
        let v = velocity(&x, k as f64 * dt)?;
        let h = R::from_f64(dt);
        for (xi, &vi) in x.data_mut().iter_mut().zip(v.data()) {
            *xi = *xi + h * vi;
        }
    }
    Ok(x)
}

/// Standard Gaussian tensor drawn from `seed`.
pub fn gaussian<R: Real>(shape: &[usize], seed: u64) -> Tensor<R> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_from(&mut rng, shape)
}

pub(crate) fn gaussian_from<R: Real>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<R> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = StandardNormal.sample(rng);
        R::from_f64(v)
    })
}

/// One training batch: clean chunks `a`, noise `z` (both `[B, H, S]`) and a
/// flow time per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBatch<R> {
    pub actions: Tensor<R>,
    pub noise: Tensor<R>,
    pub times: Vec<f64>,
}

impl<R: Real> FlowBatch<R> {
    pub fn new(actions: Tensor<R>, noise: Tensor<R>, times: Vec<f64>) -> Result<Self, ModelError> {
        if actions.shape() != noise.shape() || actions.shape().len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "flow batch",
                lhs: actions.shape().to_vec(),
                rhs: noise.shape().to_vec(),
            }
            .into());
        }
        if times.len() != actions.shape()[0] {
            return Err(ModelError::InvalidArgument(format!(
                "{} flow times for a batch of {}",
                times.len(),
                actions.shape()[0]
            )));
        }
        for &t in &times {
            check_time(t)?;
        }
        Ok(Self { actions, noise, times })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Per-sample `(1 - t) z + t a`.
    pub fn noisy(&self) -> Tensor<R> {
        let per = self.actions.numel() / self.len();
        let mut out = self.noise.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let t = self.times[i / per];
            let (a, b) = (R::from_f64(1.0 - t), R::from_f64(t));
            *v = a * *v + b * self.actions.data()[i];
        }
        out
    }

    /// Constant velocity target `a - z`.
    pub fn target(&self) -> Tensor<R> {
        let data = self
            .actions
            .data()
            .iter()
            .zip(self.noise.data())
            .map(|(&a, &z)| a - z)
            .collect();
        Tensor::new(self.actions.shape(), data).expect("same shape")
    }
}

/// Loss nodes recorded on a tape by [`FactModel::record_losses`].
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub flow: Var,
    pub entropy: Option<Var>,
    pub commit: Var,
    pub total: Var,
    /// Continuous latent `[B, L, D]`.
    pub latent: Var,
}

/// Scalar values of the loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub flow: f64,
    pub entropy: f64,
    pub commit: f64,
    pub total: f64,
}

impl LossVars {
    pub fn values<R: Real>(&self, tape: &Tape<R>) -> LossValues {
        let get = |v: Var| tape.value(v).item().as_f64();
        LossValues {
            flow: get(self.flow),
            entropy: self.entropy.map_or(0.0, get),
            commit: get(self.commit),
            total: get(self.total),
        }
    }
}

/// Encoder + decoder with their parameters.
#[derive(Debug, Clone)]
pub struct FactModel<R> {
    config: TokenizerConfig,
    layout: Layout,
    params: ModelParams<R>,
}

impl<R: Real> FactModel<R> {
    /// Freshly initialized from `config.seed`.
    pub fn new(config: TokenizerConfig) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let layout = Layout::new(&config);
        let params = ModelParams::init(&layout, config.seed);
        Ok(Self { config, layout, params })
    }

    /// Rebuilds from stored tensors, which must match the config's layout.
    pub fn from_named(config: TokenizerConfig, named: Vec<(String, Tensor<R>)>) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let layout = Layout::new(&config);
        let params = ModelParams::from_named(&layout, named)?;
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<R> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<R> {
        &mut self.params
    }

    /// Same weights in another precision.
    pub fn cast<S: Real>(&self) -> FactModel<S> {
        FactModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// Names of the encoder-side tensors (input projection, queries, blocks, head).
    pub fn is_encoder_param(name: &str) -> bool {
        name.starts_with("encoder.")
    }

    /// Puts every parameter on `tape`, trainable or constant.
    pub fn register(&self, tape: &mut Tape<R>, trainable: bool) -> Vec<Var> {
        self.params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    fn batched(&self, actions: &Tensor<R>) -> Result<Tensor<R>, ModelError> {
        let (h, s) = (self.config.horizon, self.config.action_dims);
        let shape = actions.shape();
        let ok = match shape.len() {
            2 => shape == [h, s],
            3 => shape[1..] == [h, s],
            _ => false,
        };
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "encode",
                lhs: shape.to_vec(),
                rhs: vec![h, s],
            }
            .into());
        }
        let b = actions.numel() / (h * s);
        Ok(actions.clone().reshape(&[b, h, s])?)
    }

    /// Records the encoder on `tape`. `actions` is `[B, H, S]`.
    pub fn record_encode(&self, tape: &mut Tape<R>, params: &[Var], actions: Var) -> Result<Var, ModelError> {
        Ok(network::encode(tape, &self.layout, &self.config, params, actions)?)
    }

    /// Records the decoder on `tape`.
    pub fn record_velocity(
        &self,
        tape: &mut Tape<R>,
        params: &[Var],
        noisy: Var,
        code: Var,
        times: &[f64],
    ) -> Result<Var, ModelError> {
        for &t in times {
            check_time(t)?;
        }
        let emb = tape.constant(network::time_embedding(times, self.config.width));
        Ok(network::decode_velocity(
            tape,
            &self.layout,
            &self.config,
            params,
            noisy,
            code,
            emb,
        )?)
    }

    /// Continuous latent of standardized chunk(s): `[H, S] -> [L, D]` or
    /// `[B, H, S] -> [B, L, D]`.
    pub fn encode(&self, actions: &Tensor<R>) -> Result<Tensor<R>, ModelError> {
        let input = self.batched(actions)?;
        let mut tape = Tape::new();
        let p = self.register(&mut tape, false);
        let x = tape.constant(input);
        let e = self.record_encode(&mut tape, &p, x)?;
        let mut out = tape.value(e).clone();
        if actions.shape().len() == 2 {
            out = out.reshape(&[self.config.code_length, self.config.bits])?;
        }
        Ok(out)
    }

    /// Token ids of one standardized chunk; always `L` of them.
    pub fn tokenize(&self, chunk: &Tensor<R>) -> Result<Vec<u32>, ModelError> {
        let e = self.encode(chunk)?;
        Ok(quantize(&e).remove(0).token_ids())
    }

    /// Velocity field for a batch: `noisy` is `[B, H, S]` (or `[H, S]` with one code).
    pub fn decode_velocity(
        &self,
        noisy: &Tensor<R>,
        codes: &[LatentCode],
        times: &[f64],
    ) -> Result<Tensor<R>, ModelError> {
        let input = self.batched(noisy)?;
        let b = input.shape()[0];
        if codes.len() != b || times.len() != b {
            return Err(ModelError::InvalidArgument(format!(
                "batch of {b} chunks with {} codes and {} times",
                codes.len(),
                times.len()
            )));
        }
        let (l, d) = (self.config.code_length, self.config.bits);
        let mut bits = Vec::with_capacity(b * l * d);
        for c in codes {
            if c.code_length() != l || c.bits_per_token() != d {
                return Err(ModelError::InvalidCode(format!(
                    "code is {}x{}, model expects {l}x{d}",
                    c.code_length(),
                    c.bits_per_token()
                )));
            }
            bits.extend(c.bits().iter().map(|&v| R::from_f64(f64::from(v))));
        }
        let mut tape = Tape::new();
        let p = self.register(&mut tape, false);
        let x = tape.constant(input);
        let code = tape.constant(Tensor::new(&[b, l, d], bits)?);
        let v = self.record_velocity(&mut tape, &p, x, code, times)?;
        Ok(tape.value(v).clone().reshape(noisy.shape())?)
    }

    /// Euler integration of the learned field from seeded Gaussian noise.
    /// Returns a standardized `[H, S]` chunk.
    pub fn reconstruct(&self, code: &LatentCode, ode_steps: usize, seed: u64) -> Result<Tensor<R>, ModelError> {
        Ok(self
            .reconstruct_batch(core::slice::from_ref(code), ode_steps, &[seed])?
            .remove(0))
    }

    /// Batched [`reconstruct`](Self::reconstruct); chunk `i` uses `seeds[i]`.
    pub fn reconstruct_batch(
        &self,
        codes: &[LatentCode],
        ode_steps: usize,
        seeds: &[u64],
    ) -> Result<Vec<Tensor<R>>, ModelError> {
        if ode_steps == 0 {
            return Err(ModelError::InvalidArgument("ode_steps must be at least 1".into()));
        }
        if codes.len() != seeds.len() || codes.is_empty() {
            return Err(ModelError::InvalidArgument(format!(
                "{} codes with {} seeds",
                codes.len(),
                seeds.len()
            )));
        }
        let (h, s) = (self.config.horizon, self.config.action_dims);
        let b = codes.len();
        let mut x0 = Vec::with_capacity(b * h * s);
        for &seed in seeds {
            x0.extend_from_slice(gaussian::<R>(&[h, s], seed).data());
        }
        let x0 = Tensor::new(&[b, h, s], x0)?;
        let out = euler_integrate(x0, ode_steps, |x, t| self.decode_velocity(x, codes, &vec![t; b]))?;
        Ok(out
            .into_data()
            .chunks_exact(h * s)
            .map(|c| Tensor::new(&[h, s], c.to_vec()).expect("chunk shape"))
            .collect())
    }

    /// Standardized chunk from token ids.
    pub fn detokenize(&self, ids: &[u32], seed: u64) -> Result<Tensor<R>, ModelError> {
        if ids.len() != self.config.code_length {
            return Err(ModelError::InvalidCode(format!(
                "expected {} tokens, got {}",
                self.config.code_length,
                ids.len()
            )));
        }
        let code = LatentCode::from_token_ids(ids, self.config.bits)?;
        self.reconstruct(&code, self.config.ode_steps, seed)
    }

    /// Records encoder, quantizer, decoder and all three losses for `batch`.
    ///
    /// `total = flow + entropy_weight * entropy + commit_weight * commit`. The
    /// entropy term needs at least two samples; with one sample and a zero
    /// entropy weight it is skipped.
    pub fn record_losses(
        &self,
        tape: &mut Tape<R>,
        params: &[Var],
        batch: &FlowBatch<R>,
    ) -> Result<LossVars, ModelError> {
        let b = batch.len();
        let actions = tape.constant(self.batched(&batch.actions)?);
        let latent = self.record_encode(tape, params, actions)?;
        let code = tape.sign_ste(latent);
        let noisy = tape.constant(batch.noisy());
        let v = self.record_velocity(tape, params, noisy, code, &batch.times)?;
        let target = tape.constant(batch.target());
        let flow = tape.mse(v, target)?;

        let entropy = if b >= 2 || self.config.entropy_weight > 0.0 {
            Some(entropy_loss(tape, latent, self.config.entropy_temperature)?)
        } else {
            None
        };
        let commit = commit_loss(tape, latent)?;

        let mut total = flow;
        if let Some(e) = entropy {
            let weighted = tape.scale(e, self.config.entropy_weight);
            total = tape.add(total, weighted)?;
        }
        let weighted = tape.scale(commit, self.config.commit_weight);
        total = tape.add(total, weighted)?;
        Ok(LossVars {
            flow,
            entropy,
            commit,
            total,
            latent,
        })
    }

    /// Loss values for `batch` without gradients.
    pub fn losses(&self, batch: &FlowBatch<R>) -> Result<LossValues, ModelError> {
        let mut tape = Tape::new();
        let p = self.register(&mut tape, false);
        Ok(self.record_losses(&mut tape, &p, batch)?.values(&tape))
    }

    /// Flow-matching loss with explicitly supplied codes:
    /// mean of `((a - z) - v(a_t, c, t))^2` over batch and elements.
    pub fn flow_loss(&self, batch: &FlowBatch<R>, codes: &[LatentCode]) -> Result<f64, ModelError> {
        let v = self.decode_velocity(&batch.noisy(), codes, &batch.times)?;
        let target = batch.target();
        let mut tape = Tape::new();
        let a = tape.constant(v);
        let b = tape.constant(target);
        let m = tape.mse(a, b)?;
        Ok(tape.value(m).item().as_f64())
    }
}

/// Mean of `(e - sign(e))^2` with the quantized target detached.
pub fn commit_loss<R: Real>(tape: &mut Tape<R>, latent: Var) -> Result<Var, TensorError> {
    let quantized = tape.sign_ste(latent);
    let target = tape.detach(quantized);
    tape.mse(latent, target)
}

/// Factorized per-bit entropy objective of a `[B, ..]` latent batch.
pub fn entropy_loss<R: Real>(tape: &mut Tape<R>, latent: Var, tau: f64) -> Result<Var, TensorError> {
    let shape = tape.shape(latent).to_vec();
    let b = shape[0];
    let flat = tape.reshape(latent, &[b, shape.iter().product::<usize>() / b])?;
    tape.bit_entropy(flat, tau)
}

#[cfg(test)]
mod tests;
