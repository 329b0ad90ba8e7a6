//! Deterministic mini-batch training of a [`FactModel`].
//!
//! Randomness is counter-based: batch composition, flow times and noise for
//! step `k` are drawn from streams keyed by `(seed, k)`, so a [`TrainState`]
//! needs only its step counter to resume exactly.

mod optim;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use optim::{clip_global_norm, Adam, AdamConfig};

use crate::model::{gaussian_from, FactModel, FlowBatch, LossValues, ModelError};
use crate::tensor::{Real, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at step {step}: {loss}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("invalid training setup: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: u64,
    /// Learning rate at the last step as a fraction of the peak, reached by
    /// cosine decay after warmup. 1.0 keeps the rate constant.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10000,
            batch_size: 32,
            learning_rate: 3e-3,
            warmup_steps: 300,
            final_lr_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        // The entropy term needs a batch marginal.
        if self.batch_size < 2 {
            return Err(TrainError::Invalid("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(TrainError::Invalid(
                "beta1 and beta2 must lie in [0, 1) and eps must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !(self.grad_clip >= 0.0) {
            return Err(TrainError::Invalid(
                "learning_rate and grad_clip must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(TrainError::Invalid("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Linear warmup to the peak rate, then cosine decay to
    /// `final_lr_fraction * learning_rate` at `steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let cosine = 0.5 * (1.0 + libm_cos(core::f64::consts::PI * progress));
        let floor = self.final_lr_fraction;
        self.learning_rate * (floor + (1.0 - floor) * cosine)
    }
}

fn libm_cos(x: f64) -> f64 {
    num_traits::Float::cos(x)
}

/// Per-step telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss_total: f64,
    pub loss_flow: f64,
    pub loss_entropy: f64,
    pub loss_commit: f64,
    pub lr: f64,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone)]
pub struct TrainState<R> {
    pub model: FactModel<R>,
    pub optimizer: Adam<R>,
    /// Steps completed.
    pub step: u64,
    pub config: TrainConfig,
}

const PERMUTATION_STREAM: u64 = 1 << 63;

impl<R: Real> TrainState<R> {
    pub fn new(model: FactModel<R>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let optimizer = Adam::new(
            model.params().tensors(),
            AdamConfig {
                beta1: config.beta1,
                beta2: config.beta2,
                eps: config.eps,
            },
        );
        Ok(Self {
            model,
            optimizer,
            step: 0,
            config,
        })
    }

    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(stream);
        rng
    }

    /// Corpus indices of the batch for `step`: consecutive slices of a
    /// per-epoch permutation.
    fn batch_indices(&self, step: u64, corpus_len: usize, cache: &mut BTreeMap<u64, Vec<usize>>) -> Vec<usize> {
        let b = self.config.batch_size as u64;
        let n = corpus_len as u64;
        (step * b..(step + 1) * b)
            .map(|pos| {
                let (epoch, at) = (pos / n, (pos % n) as usize);
                let perm = cache.entry(epoch).or_insert_with(|| {
                    let mut idx: Vec<usize> = (0..corpus_len).collect();
                    idx.shuffle(&mut self.stream(PERMUTATION_STREAM | epoch));
                    idx
                });
                perm[at]
            })
            .collect()
    }

    /// Assembles the batch for `step` from standardized `[H, S]` chunks.
    pub fn make_batch(&self, step: u64, corpus: &[Tensor<R>]) -> Result<FlowBatch<R>, TrainError> {
        let mut cache = BTreeMap::new();
        self.make_batch_cached(step, corpus, &mut cache)
    }

    fn make_batch_cached(
        &self,
        step: u64,
        corpus: &[Tensor<R>],
        cache: &mut BTreeMap<u64, Vec<usize>>,
    ) -> Result<FlowBatch<R>, TrainError> {
        let c = self.model.config();
        let (h, s) = (c.horizon, c.action_dims);
        if corpus.is_empty() {
            return Err(TrainError::Invalid("empty training corpus".into()));
        }
        if let Some(bad) = corpus.iter().find(|t| t.shape() != [h, s]) {
            return Err(TrainError::Invalid(format!(
                "chunk shape {:?}, model expects [{h}, {s}]",
                bad.shape()
            )));
        }
        let idx = self.batch_indices(step, corpus.len(), cache);
        let b = idx.len();
        let mut actions = Vec::with_capacity(b * h * s);
        for &i in &idx {
            actions.extend_from_slice(corpus[i].data());
        }
        let mut rng = self.stream(step);
        let times: Vec<f64> = (0..b).map(|_| rng.random_range(0.0..1.0)).collect();
        let noise = gaussian_from::<R>(&mut rng, &[b, h, s]);
        Ok(FlowBatch::new(
            Tensor::new(&[b, h, s], actions).map_err(ModelError::from)?,
            noise,
            times,
        )?)
    }

    /// One optimizer update on `batch`. Returns the pre-update losses.
    pub fn step_on(&mut self, batch: &FlowBatch<R>) -> Result<StepMetrics, TrainError> {
        let mut tape = Tape::new();
        let vars = self.model.register(&mut tape, true);
        let losses = self.model.record_losses(&mut tape, &vars, batch)?;
        let LossValues {
            flow,
            entropy,
            commit,
            total,
        } = losses.values(&tape);
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step: self.step,
                loss: total,
            });
        }
        tape.backward(losses.total).map_err(ModelError::from)?;
        let mut grads: Vec<Vec<R>> = vars
            .iter()
            .map(|&v| tape.grad(v).expect("every parameter is a leaf").to_vec())
            .collect();
        drop(tape);
        if self.config.grad_clip > 0.0 {
            clip_global_norm(&mut grads, self.config.grad_clip);
        }
        let lr = self.config.lr_at(self.step);
        self.optimizer.update(self.model.params_mut().tensors_mut(), &grads, lr);
        let metrics = StepMetrics {
            step: self.step,
            loss_total: total,
            loss_flow: flow,
            loss_entropy: entropy,
            loss_commit: commit,
            lr,
        };
        self.step += 1;
        Ok(metrics)
    }

    /// Trains until `config.steps` or `until_step`, whichever is smaller,
    /// reporting every step to `on_step`.
    pub fn run(
        &mut self,
        corpus: &[Tensor<R>],
        until_step: u64,
        mut on_step: impl FnMut(&StepMetrics),
    ) -> Result<(), TrainError> {
        let end = until_step.min(self.config.steps);
        let mut cache = BTreeMap::new();
        while self.step < end {
            let batch = self.make_batch_cached(self.step, corpus, &mut cache)?;
            let m = self.step_on(&batch)?;
            on_step(&m);
            // Keep only the current epoch's permutation.
            let epoch = self.step * self.config.batch_size as u64 / corpus.len() as u64;
            cache.retain(|&e, _| e + 1 >= epoch);
        }
        Ok(())
    }
}

/// Initializes a model from `model_config` and trains it on `corpus`.
pub fn train<R: Real>(
    corpus: &[Tensor<R>],
    model_config: crate::model::TokenizerConfig,
    config: TrainConfig,
    on_step: impl FnMut(&StepMetrics),
) -> Result<TrainState<R>, TrainError> {
    let model = FactModel::new(model_config)?;
    let mut state = TrainState::new(model, config)?;
    let steps = state.config.steps;
    state.run(corpus, steps, on_step)?;
    Ok(state)
}

/// Standardizes chunks and converts them to `[H, S]` tensors.
pub fn prepare_corpus<R: Real>(
    chunks: &[crate::data::ActionChunk],
    stats: &crate::data::NormStats,
) -> Result<Vec<Tensor<R>>, ModelError> {
    chunks
        .iter()
        .map(|c| {
            let z = crate::data::standardize(c, stats)?;
            let values = z.values.iter().map(|&v| R::from_f64(v)).collect();
            Ok(Tensor::new(&[c.horizon, c.dims], values)?)
        })
        .collect()
}
