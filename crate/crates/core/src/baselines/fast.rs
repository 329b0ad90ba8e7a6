use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{BaselineError, BpeModel, DctBasis};

/// DCT coefficients of a row-major `[horizon, dims]` chunk, flattened
/// dimension-major with low frequencies first.
pub fn chunk_coefficients(values: &[f64], horizon: usize, dims: usize, basis: &DctBasis) -> Vec<f64> {
    assert_eq!(values.len(), horizon * dims);
    let mut out = Vec::with_capacity(values.len());
    let mut column = alloc::vec![0.0; horizon];
    for d in 0..dims {
        for (t, c) in column.iter_mut().enumerate() {
            *c = values[t * dims + d];
        }
        out.extend(basis.forward(&column));
    }
    out
}

/// Inverse of [`chunk_coefficients`].
pub fn coefficients_to_chunk(coeffs: &[f64], horizon: usize, dims: usize, basis: &DctBasis) -> Vec<f64> {
    assert_eq!(coeffs.len(), horizon * dims);
    let mut out = alloc::vec![0.0; horizon * dims];
    for (d, block) in coeffs.chunks_exact(horizon).enumerate() {
        for (t, v) in basis.inverse(block).into_iter().enumerate() {
            out[t * dims + d] = v;
        }
    }
    out
}

/// DCT, scale-and-round, then BPE over offset integer coefficients.
/// Quantized coefficients outside the fitted range are clamped to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastSpec {
    pub horizon: usize,
    pub dims: usize,
    pub quant_scale: f64,
    pub min_level: i64,
    pub max_level: i64,
    pub bpe: BpeModel,
    #[serde(skip)]
    basis: Option<DctBasis>,
}

impl FastSpec {
    /// Fits the level range and BPE merges on precomputed training
    /// coefficients (see [`chunk_coefficients`]).
    pub fn fit(
        train_coeffs: &[Vec<f64>],
        horizon: usize,
        dims: usize,
        quant_scale: f64,
        target_vocab: u32,
    ) -> Result<Self, BaselineError> {
        if train_coeffs.is_empty() {
            return Err(BaselineError::EmptyCorpus);
        }
        if !(quant_scale > 0.0) || !quant_scale.is_finite() {
            return Err(BaselineError::InvalidArgument(format!(
                "quant_scale must be positive, got {quant_scale}"
            )));
        }
        if let Some(c) = train_coeffs.iter().find(|c| c.len() != horizon * dims) {
            return Err(BaselineError::InvalidArgument(format!(
                "{} coefficients, expected {}",
                c.len(),
                horizon * dims
            )));
        }
        let levels: Vec<Vec<i64>> = train_coeffs
            .iter()
            .map(|c| c.iter().map(|&x| level(x, quant_scale)).collect())
            .collect();
        let min_level = *levels.iter().flatten().min().expect("non-empty");
        let max_level = *levels.iter().flatten().max().expect("non-empty");
        let base = (max_level - min_level + 1) as u32;
        let streams: Vec<Vec<u32>> = levels
            .iter()
            .map(|l| l.iter().map(|&v| (v - min_level) as u32).collect())
            .collect();
        let bpe = BpeModel::train(&streams, base, target_vocab.max(base + 1))?;
        Ok(Self {
            horizon,
            dims,
            quant_scale,
            min_level,
            max_level,
            bpe,
            basis: Some(DctBasis::new(horizon)),
        })
    }

    fn basis(&self) -> DctBasis {
        self.basis.clone().unwrap_or_else(|| DctBasis::new(self.horizon))
    }

    pub fn vocab_size(&self) -> usize {
        self.bpe.vocab_size()
    }

    /// Offset integer levels before BPE.
    pub fn base_tokens(&self, coeffs: &[f64]) -> Vec<u32> {
        coeffs
            .iter()
            .map(|&x| (level(x, self.quant_scale).clamp(self.min_level, self.max_level) - self.min_level) as u32)
            .collect()
    }

    pub fn tokenize_coefficients(&self, coeffs: &[f64]) -> Result<Vec<u32>, BaselineError> {
        self.bpe.encode(&self.base_tokens(coeffs))
    }

    pub fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, BaselineError> {
        if values.len() != self.horizon * self.dims {
            return Err(BaselineError::InvalidArgument(format!(
                "chunk has {} values, expected {}",
                values.len(),
                self.horizon * self.dims
            )));
        }
        let coeffs = chunk_coefficients(values, self.horizon, self.dims, &self.basis());
        self.tokenize_coefficients(&coeffs)
    }

    /// Inverts the base-token stage alone.
    pub fn detokenize_base(&self, base: &[u32]) -> Result<Vec<f64>, BaselineError> {
        let total = self.horizon * self.dims;
        if base.len() != total {
            return Err(BaselineError::DecodeFailure(format!(
                "decoded {} coefficients, expected {total}",
                base.len()
            )));
        }
        let coeffs: Vec<f64> = base
            .iter()
            .map(|&t| (t as i64 + self.min_level) as f64 / self.quant_scale)
            .collect();
        Ok(coefficients_to_chunk(&coeffs, self.horizon, self.dims, &self.basis()))
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<Vec<f64>, BaselineError> {
        self.detokenize_base(&self.bpe.decode(ids)?)
    }
}

fn level(x: f64, scale: f64) -> i64 {
    Float::round(x * scale) as i64
}
