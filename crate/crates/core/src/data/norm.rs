use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{ActionChunk, DataError, Episode};

/// Lower bound applied to every per-dimension standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension mean and population standard deviation of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }
}

pub fn compute_norm_stats(train: &[Episode]) -> Result<NormStats, DataError> {
    let first = train
        .iter()
        .find(|e| e.steps() > 0)
        .ok_or(DataError::Empty("training episodes"))?;
    let dims = first.dims();
    let mut sum = vec![0.0; dims];
    let mut count = 0usize;
    for ep in train {
        ep.validate().or_else(|e| match e {
            DataError::Empty(_) => Ok(()),
            other => Err(other),
        })?;
        for row in &ep.states {
            if row.len() != dims {
                return Err(DataError::DimensionMismatch {
                    expected: dims,
                    got: row.len(),
                });
            }
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; dims];
    for row in train.iter().flat_map(|e| &e.states) {
        for ((acc, v), m) in sq.iter_mut().zip(row).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = sq
        .iter()
        .map(|s| Float::sqrt(s / count as f64).max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

fn check_dims(chunk: &ActionChunk, stats: &NormStats) -> Result<(), DataError> {
    if chunk.dims != stats.dims() {
        return Err(DataError::DimensionMismatch {
            expected: stats.dims(),
            got: chunk.dims,
        });
    }
    Ok(())
}

/// `(x - mean) / std` per dimension.
pub fn standardize(chunk: &ActionChunk, stats: &NormStats) -> Result<ActionChunk, DataError> {
    check_dims(chunk, stats)?;
    let values = chunk
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = i % chunk.dims;
            (v - stats.mean[d]) / stats.std[d]
        })
        .collect::<Vec<_>>();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFinite("standardized chunk"));
    }
    Ok(chunk.with_values(values))
}

/// `std * x + mean` per dimension.
pub fn destandardize(chunk: &ActionChunk, stats: &NormStats) -> Result<ActionChunk, DataError> {
    check_dims(chunk, stats)?;
    let values = chunk
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = i % chunk.dims;
            v * stats.std[d] + stats.mean[d]
        })
        .collect();
    Ok(chunk.with_values(values))
}
