//! Reconstruction fidelity of tokenizers on standardized test chunks.

mod tokenizers;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use tokenizers::{BinningTokenizer, FactEval, FastTokenizer, IdentityTokenizer};

use crate::data::{ActionChunk, NormStats};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TokenizerError {
    /// Token ids that cannot be turned back into a chunk. Counted, not fatal.
    #[error("decode failure: {0}")]
    DecodeFailure(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no test chunks")]
    Empty,
    #[error("task {0} appears in both training and test data")]
    Leakage(String),
    #[error("chunk shape [{horizon}, {dims}] does not match tokenizer")]
    Shape { horizon: usize, dims: usize },
    #[error("tokenizer {name}: {reason}")]
    Tokenizer { name: String, reason: String },
}

/// A tokenizer operating on standardized row-major `[H, S]` chunk values.
pub trait Tokenizer {
    fn name(&self) -> String;
    fn vocab_size(&self) -> usize;
    fn horizon(&self) -> usize;
    fn dims(&self) -> usize;
    fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, TokenizerError>;
    /// `seed` drives any sampling in reconstruction.
    fn detokenize(&self, ids: &[u32], seed: u64) -> Result<Vec<f64>, TokenizerError>;
    /// Detokenizes many chunks; `seeds[i]` belongs to `ids[i]`.
    fn detokenize_many(&self, ids: &[Vec<u32>], seeds: &[u64]) -> Vec<Result<Vec<f64>, TokenizerError>> {
        ids.iter().zip(seeds).map(|(i, &s)| self.detokenize(i, s)).collect()
    }
}

/// One tokenizer evaluated on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub tokenizer: String,
    /// Mean tokens per chunk.
    pub code_length: f64,
    pub vocab_size: usize,
    /// Standardized-space MSE over decodable chunks; NaN if none decoded
    /// or the point failed before evaluation.
    #[serde(with = "nan_as_null")]
    pub mse: f64,
    #[serde(with = "nan_as_null::vec")]
    pub per_dim_mse: Vec<f64>,
    /// Per-dimension MSE in the original units.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "nan_as_null::opt_vec")]
    pub raw_per_dim_mse: Option<Vec<f64>>,
    pub failure_rate: f64,
    pub chunks: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    /// Placeholder for a grid point that could not be evaluated.
    pub fn failed(tokenizer: String, code_length: f64, vocab_size: usize, seed: u64, reason: String) -> Self {
        Self {
            tokenizer,
            code_length,
            vocab_size,
            mse: f64::NAN,
            per_dim_mse: Vec::new(),
            raw_per_dim_mse: None,
            failure_rate: 1.0,
            chunks: 0,
            seed,
            error: Some(reason),
        }
    }

    /// Fills `raw_per_dim_mse` by undoing the per-dimension scaling.
    pub fn with_raw(mut self, stats: &NormStats) -> Self {
        self.raw_per_dim_mse = Some(
            self.per_dim_mse
                .iter()
                .zip(&stats.std)
                .map(|(m, s)| m * s * s)
                .collect(),
        );
        self
    }
}

mod nan_as_null {
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    fn wrap(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect()
    }

    fn unwrap(v: Vec<Option<f64>>) -> Vec<f64> {
        v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()
    }

    pub mod vec {
        use alloc::vec::Vec;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            super::wrap(v).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(super::unwrap(Vec::deserialize(d)?))
        }
    }

    pub mod opt_vec {
        use alloc::vec::Vec;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
            v.as_deref().map(super::wrap).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
            Ok(Option::<Vec<Option<f64>>>::deserialize(d)?.map(super::unwrap))
        }
    }
}

/// Seed for reconstruction sample `k` of test chunk `i`.
pub fn chunk_seed(seed: u64, i: usize, k: usize) -> u64 {
    let mut z = seed ^ ((i as u64) << 20 | k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub seed: u64,
    /// Reconstructions averaged per chunk.
    pub samples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { seed: 0, samples: 1 }
    }
}

/// Fails if any task id occurs on both sides.
pub fn assert_disjoint(train: &[ActionChunk], test: &[ActionChunk]) -> Result<(), EvalError> {
    let train_ids: BTreeSet<&str> = train.iter().map(|c| c.task_id.as_str()).collect();
    match test.iter().find(|c| train_ids.contains(c.task_id.as_str())) {
        Some(c) => Err(EvalError::Leakage(c.task_id.clone())),
        None => Ok(()),
    }
}

/// Tokenizes and reconstructs every standardized test chunk. Decode
/// failures are excluded from the MSE and reported as `failure_rate`.
pub fn eval_reconstruction(
    tokenizer: &dyn Tokenizer,
    test: &[ActionChunk],
    options: EvalOptions,
) -> Result<EvalRecord, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let (h, s) = (tokenizer.horizon(), tokenizer.dims());
    if let Some(c) = test.iter().find(|c| c.horizon != h || c.dims != s) {
        return Err(EvalError::Shape {
            horizon: c.horizon,
            dims: c.dims,
        });
    }
    let fatal = |e: TokenizerError| EvalError::Tokenizer {
        name: tokenizer.name(),
        reason: format!("{e}"),
    };
    let samples = options.samples.max(1);
    let mut ids = Vec::with_capacity(test.len());
    let mut tokens = 0usize;
    for c in test {
        let t = tokenizer.tokenize(&c.values).map_err(fatal)?;
        tokens += t.len();
        ids.push(t);
    }
    let mut sums = vec![vec![0.0; h * s]; test.len()];
    let mut failed = vec![false; test.len()];
    for k in 0..samples {
        let seeds: Vec<u64> = (0..test.len()).map(|i| chunk_seed(options.seed, i, k)).collect();
        for (i, r) in tokenizer.detokenize_many(&ids, &seeds).into_iter().enumerate() {
            match r {
                Ok(v) if v.len() == h * s => {
                    sums[i].iter_mut().zip(&v).for_each(|(a, b)| *a += b);
                }
                Ok(v) => {
                    return Err(fatal(TokenizerError::Fatal(format!(
                        "reconstruction has {} values, expected {}",
                        v.len(),
                        h * s
                    ))))
                }
                Err(TokenizerError::DecodeFailure(_)) => failed[i] = true,
                Err(e) => return Err(fatal(e)),
            }
        }
    }
    let mut per_dim = vec![0.0; s];
    let mut ok = 0usize;
    for ((c, sum), &bad) in test.iter().zip(&sums).zip(&failed) {
        if bad {
            continue;
        }
        ok += 1;
        for (j, (&x, &acc)) in c.values.iter().zip(sum).enumerate() {
            let d = x - acc / samples as f64;
            per_dim[j % s] += d * d;
        }
    }
    let (mse, per_dim_mse) = if ok == 0 {
        (f64::NAN, vec![f64::NAN; s])
    } else {
        let per_dim: Vec<f64> = per_dim.iter().map(|v| v / (ok * h) as f64).collect();
        (per_dim.iter().sum::<f64>() / s as f64, per_dim)
    };
    Ok(EvalRecord {
        tokenizer: tokenizer.name(),
        code_length: tokens as f64 / test.len() as f64,
        vocab_size: tokenizer.vocab_size(),
        mse,
        per_dim_mse,
        raw_per_dim_mse: None,
        failure_rate: (test.len() - ok) as f64 / test.len() as f64,
        chunks: test.len(),
        seed: options.seed,
        error: None,
    })
}

/// Fraction of chunks in which each bit position is +1, in code order
/// (`[L * D]`), from FACT token ids.
pub fn bit_activation(codes: &[Vec<u32>], bits: usize) -> Vec<f64> {
    let Some(first) = codes.first() else {
        return Vec::new();
    };
    let mut on = vec![0usize; first.len() * bits];
    for code in codes {
        for (l, &id) in code.iter().enumerate() {
            for b in 0..bits {
                if id >> (bits - 1 - b) & 1 == 1 {
                    on[l * bits + b] += 1;
                }
            }
        }
    }
    on.iter().map(|&n| n as f64 / codes.len() as f64).collect()
}

/// Share of bit positions whose activation probability lies in `[lo, hi]`.
pub fn balanced_bit_fraction(activation: &[f64], lo: f64, hi: f64) -> f64 {
    if activation.is_empty() {
        return 0.0;
    }
    activation.iter().filter(|p| (lo..=hi).contains(*p)).count() as f64 / activation.len() as f64
}

/// Distinct token ids used, as a share of the vocabulary.
pub fn token_usage(codes: &[Vec<u32>], vocab: usize) -> f64 {
    let used: BTreeSet<u32> = codes.iter().flatten().copied().collect();
    used.len() as f64 / vocab as f64
}

#[cfg(test)]
mod tests;
