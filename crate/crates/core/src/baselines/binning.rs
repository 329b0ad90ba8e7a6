use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::data::ActionChunk;

/// Linear-interpolated quantile of unsorted `values`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

/// Per-dimension uniform quantizer over clipped ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub bins_per_dim: u32,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub horizon: usize,
    /// Emit at most this many tokens per chunk (row-major prefix).
    pub token_budget: Option<usize>,
}

impl BinningSpec {
    pub fn new(bins_per_dim: u32, low: Vec<f64>, high: Vec<f64>, horizon: usize) -> Result<Self, BaselineError> {
        if bins_per_dim == 0 || low.is_empty() || low.len() != high.len() || horizon == 0 {
            return Err(BaselineError::InvalidArgument(format!(
                "bins {bins_per_dim}, {} lows, {} highs, horizon {horizon}",
                low.len(),
                high.len()
            )));
        }
        if let Some(d) = (0..low.len()).find(|&d| !(low[d] < high[d])) {
            return Err(BaselineError::InvalidArgument(format!(
                "empty clip range in dimension {d}: [{}, {}]",
                low[d], high[d]
            )));
        }
        Ok(Self {
            bins_per_dim,
            low,
            high,
            horizon,
            token_budget: None,
        })
    }

    /// Clip bounds at the `q_low`/`q_high` quantiles of each dimension.
    pub fn fit(chunks: &[ActionChunk], bins_per_dim: u32, q_low: f64, q_high: f64) -> Result<Self, BaselineError> {
        let first = chunks.first().ok_or(BaselineError::EmptyCorpus)?;
        let dims = first.dims;
        let mut per_dim = alloc::vec![Vec::new(); dims];
        for c in chunks {
            if c.dims != dims || c.horizon != first.horizon {
                return Err(BaselineError::InvalidArgument("chunks differ in shape".into()));
            }
            for (i, &v) in c.values.iter().enumerate() {
                per_dim[i % dims].push(v);
            }
        }
        let low = per_dim.iter().map(|v| quantile(v, q_low)).collect();
        let high = per_dim.iter().map(|v| quantile(v, q_high)).collect();
        Self::new(bins_per_dim, low, high, first.horizon)
    }

    pub fn with_budget(mut self, budget: Option<usize>) -> Self {
        self.token_budget = budget;
        self
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }

    pub fn width(&self, d: usize) -> f64 {
        (self.high[d] - self.low[d]) / self.bins_per_dim as f64
    }

    pub fn bin(&self, d: usize, x: f64) -> u32 {
        let x = x.clamp(self.low[d], self.high[d]);
        let id = ((x - self.low[d]) / self.width(d)) as u32;
        id.min(self.bins_per_dim - 1)
    }

    pub fn center(&self, d: usize, id: u32) -> f64 {
        self.low[d] + (id as f64 + 0.5) * self.width(d)
    }

    /// Row-major ids, truncated to the token budget if one is set.
    pub fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, BaselineError> {
        let dims = self.dims();
        if values.len() != self.horizon * dims {
            return Err(BaselineError::InvalidArgument(format!(
                "chunk has {} values, expected {}",
                values.len(),
                self.horizon * dims
            )));
        }
        let n = self.token_budget.map_or(values.len(), |b| b.min(values.len()));
        Ok(values[..n]
            .iter()
            .enumerate()
            .map(|(i, &v)| self.bin(i % dims, v))
            .collect())
    }

    /// Bin centers; positions beyond the decoded prefix repeat the last
    /// decoded value of their dimension, or zero if none was decoded.
    pub fn detokenize(&self, ids: &[u32]) -> Result<Vec<f64>, BaselineError> {
        let dims = self.dims();
        let total = self.horizon * dims;
        if ids.len() > total {
            return Err(BaselineError::DecodeFailure(format!(
                "{} ids for a chunk of {total} values",
                ids.len()
            )));
        }
        let mut out = Vec::with_capacity(total);
        for (i, &id) in ids.iter().enumerate() {
            if id >= self.bins_per_dim {
                return Err(BaselineError::TokenOutOfRange {
                    id,
                    vocab: self.bins_per_dim as usize,
                });
            }
            out.push(self.center(i % dims, id));
        }
        for i in ids.len()..total {
            out.push(if i >= dims { out[i - dims] } else { 0.0 });
        }
        Ok(out)
    }
}
