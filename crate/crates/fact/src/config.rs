//! Run configuration: one JSON document plus `key=value` overrides.

use std::path::Path;

use fact_core::data::{CorpusSpec, SplitRatio};
use fact_core::model::TokenizerConfig;
use fact_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub bins: u32,
    pub clip_low: f64,
    pub clip_high: f64,
    pub fast_vocab: u32,
    /// Fixed quantization scales traced for the rate-distortion curve.
    pub fast_scales: Vec<f64>,
    /// Allowed relative gap between the matched FAST+ code length and FACT's.
    pub match_tolerance: f64,
    /// Training chunks used to measure code length while matching.
    pub match_sample: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            bins: 256,
            clip_low: 0.01,
            clip_high: 0.99,
            fast_vocab: 4096,
            fast_scales: vec![10.0, 32.0, 100.0, 316.0, 1000.0],
            match_tolerance: 0.1,
            match_sample: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    /// Reconstructions averaged per chunk.
    pub samples: usize,
    /// Chunks reconstructed together.
    pub batch: usize,
    /// Training chunks tokenized for codebook statistics.
    pub usage_sample: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 1,
            batch: 50,
            usage_sample: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub code_lengths: Vec<usize>,
    pub bits: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            code_lengths: vec![5, 10, 20, 32],
            bits: vec![12],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: CorpusSpec,
    pub data_seed: u64,
    pub stride: usize,
    pub split: SplitRatio,
    pub split_seed: u64,
    pub tokenizer: TokenizerConfig,
    pub train: TrainConfig,
    /// Steps between checkpoint writes; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub baselines: BaselineConfig,
    pub eval: EvalConfig,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: CorpusSpec::default(),
            data_seed: 0,
            stride: 16,
            split: SplitRatio::default(),
            split_seed: 0,
            tokenizer: TokenizerConfig::default(),
            train: TrainConfig::default(),
            checkpoint_every: 1000,
            baselines: BaselineConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepGrid::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `overrides` and
    /// `seed`, and validates the result.
    pub fn resolve(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, Error> {
        let mut value = match path {
            Some(p) => crate::io::read_json::<Value>(p)?,
            None => serde_json::to_value(Self::default()).expect("defaults serialize"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.set_seed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses one seed for data, split, initialization, training and evaluation.
    pub fn set_seed(&mut self, seed: u64) {
        self.data_seed = seed;
        self.split_seed = seed;
        self.tokenizer.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        self.data.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.tokenizer.validate().map_err(Error::Config)?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.data.dims != self.tokenizer.action_dims {
            return bad(format!(
                "data.dims {} differs from tokenizer.action_dims {}",
                self.data.dims, self.tokenizer.action_dims
            ));
        }
        if self.data.steps < self.tokenizer.horizon {
            return bad(format!(
                "episodes of {} steps are shorter than the horizon {}",
                self.data.steps, self.tokenizer.horizon
            ));
        }
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        if self.split.train == 0 || self.split.test == 0 {
            return bad("split parts must be positive".into());
        }
        let b = &self.baselines;
        if b.bins == 0 || !(0.0..1.0).contains(&b.clip_low) || !(b.clip_low < b.clip_high && b.clip_high <= 1.0) {
            return bad("baselines need bins > 0 and 0 <= clip_low < clip_high <= 1".into());
        }
        if b.fast_scales.iter().any(|s| !(*s > 0.0)) || !(b.match_tolerance > 0.0) {
            return bad("fast scales and match tolerance must be positive".into());
        }
        if self.eval.samples == 0 || self.eval.batch == 0 {
            return bad("eval.samples and eval.batch must be positive".into());
        }
        if self
            .sweep
            .code_lengths
            .iter()
            .any(|&l| l == 0 || l > self.tokenizer.horizon)
            || self
                .sweep
                .bits
                .iter()
                .any(|&d| d == 0 || d > fact_core::model::MAX_BITS)
        {
            return bad("sweep code lengths must lie in 1..=horizon and bits in 1..=24".into());
        }
        Ok(())
    }
}

/// Sets the value at a dotted `key` path. The value is parsed as JSON when
/// possible and taken as a string otherwise. The key must already exist.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Error> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
    let mut slot = &mut *root;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}
