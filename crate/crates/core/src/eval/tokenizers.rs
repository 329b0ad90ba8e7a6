use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Tokenizer, TokenizerError};
use crate::baselines::{BaselineError, BinningSpec, FastSpec};
use crate::model::FactModel;
use crate::tensor::{Real, Tensor};

fn convert(e: BaselineError) -> TokenizerError {
    match e {
        BaselineError::DecodeFailure(_) | BaselineError::TokenOutOfRange { .. } => {
            TokenizerError::DecodeFailure(format!("{e}"))
        }
        other => TokenizerError::Fatal(format!("{other}")),
    }
}

/// Pass-through reference: one token per value, reconstruction is exact.
/// Values are carried as `f32` bit patterns.
#[derive(Debug, Clone, Copy)]
pub struct IdentityTokenizer {
    pub horizon: usize,
    pub dims: usize,
}

impl Tokenizer for IdentityTokenizer {
    fn name(&self) -> String {
        "identity".to_string()
    }
    fn vocab_size(&self) -> usize {
        1 << 32
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn dims(&self) -> usize {
        self.dims
    }
    fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, TokenizerError> {
        Ok(values.iter().map(|&v| (v as f32).to_bits()).collect())
    }
    fn detokenize(&self, ids: &[u32], _seed: u64) -> Result<Vec<f64>, TokenizerError> {
        Ok(ids.iter().map(|&b| f32::from_bits(b) as f64).collect())
    }
}

pub struct BinningTokenizer(pub BinningSpec);

impl Tokenizer for BinningTokenizer {
    fn name(&self) -> String {
        match self.0.token_budget {
            Some(b) => format!("binning{}@{b}", self.0.bins_per_dim),
            None => format!("binning{}", self.0.bins_per_dim),
        }
    }
    fn vocab_size(&self) -> usize {
        self.0.bins_per_dim as usize
    }
    fn horizon(&self) -> usize {
        self.0.horizon
    }
    fn dims(&self) -> usize {
        self.0.dims()
    }
    fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, TokenizerError> {
        self.0.tokenize(values).map_err(convert)
    }
    fn detokenize(&self, ids: &[u32], _seed: u64) -> Result<Vec<f64>, TokenizerError> {
        self.0.detokenize(ids).map_err(convert)
    }
}

pub struct FastTokenizer(pub FastSpec);

impl Tokenizer for FastTokenizer {
    fn name(&self) -> String {
        "fast+".to_string()
    }
    fn vocab_size(&self) -> usize {
        self.0.vocab_size()
    }
    fn horizon(&self) -> usize {
        self.0.horizon
    }
    fn dims(&self) -> usize {
        self.0.dims
    }
    fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, TokenizerError> {
        self.0.tokenize(values).map_err(convert)
    }
    fn detokenize(&self, ids: &[u32], _seed: u64) -> Result<Vec<f64>, TokenizerError> {
        self.0.detokenize(ids).map_err(convert)
    }
}

/// FACT with batched reconstruction.
pub struct FactEval<'a, R> {
    pub model: &'a FactModel<R>,
    pub batch: usize,
}

impl<R: Real> FactEval<'_, R> {
    fn fatal(e: impl core::fmt::Display) -> TokenizerError {
        TokenizerError::Fatal(format!("{e}"))
    }
}

impl<R: Real> Tokenizer for FactEval<'_, R> {
    fn name(&self) -> String {
        "fact".to_string()
    }
    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size() as usize
    }
    fn horizon(&self) -> usize {
        self.model.config().horizon
    }
    fn dims(&self) -> usize {
        self.model.config().action_dims
    }
    fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, TokenizerError> {
        let c = self.model.config();
        let t = Tensor::new(
            &[c.horizon, c.action_dims],
            values.iter().map(|&v| R::from_f64(v)).collect(),
        )
        .map_err(Self::fatal)?;
        self.model.tokenize(&t).map_err(Self::fatal)
    }
    fn detokenize(&self, ids: &[u32], seed: u64) -> Result<Vec<f64>, TokenizerError> {
        let out = self.model.detokenize(ids, seed).map_err(Self::fatal)?;
        Ok(out.data().iter().map(|v| v.as_f64()).collect())
    }
    fn detokenize_many(&self, ids: &[Vec<u32>], seeds: &[u64]) -> Vec<Result<Vec<f64>, TokenizerError>> {
        let bits = self.model.config().bits;
        let mut out = Vec::with_capacity(ids.len());
        for (group, group_seeds) in ids.chunks(self.batch.max(1)).zip(seeds.chunks(self.batch.max(1))) {
            let codes: Result<Vec<_>, _> = group
                .iter()
                .map(|i| crate::model::LatentCode::from_token_ids(i, bits))
                .collect();
            let result = codes.map_err(Self::fatal).and_then(|codes| {
                self.model
                    .reconstruct_batch(&codes, self.model.config().ode_steps, group_seeds)
                    .map_err(Self::fatal)
            });
            match result {
                Ok(chunks) => out.extend(
                    chunks
                        .into_iter()
                        .map(|t| Ok(t.data().iter().map(|v| v.as_f64()).collect())),
                ),
                Err(e) => out.extend(group.iter().map(|_| Err(e.clone()))),
            }
        }
        out
    }
}
