//! Comparison tokenizers: per-dimension uniform binning and a DCT + BPE
//! compression pipeline.

mod binning;
mod bpe;
mod dct;
mod fast;

use alloc::string::String;

pub use binning::{quantile, BinningSpec};
pub use bpe::BpeModel;
pub use dct::{dct_forward, dct_inverse, DctBasis};
pub use fast::{chunk_coefficients, coefficients_to_chunk, FastSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("token {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("decode failure: {0}")]
    DecodeFailure(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
