//! Core algorithms of the FACT action tokenizer.
//!
//! Everything here is pure computation over `alloc` collections: the
//! autodiff [`tensor`] layer, trajectory [`data`] handling, the
//! encoder/quantizer/flow decoder in [`model`], the optimizer and training
//! loop in [`train`], comparison tokenizers in [`baselines`], and the
//! reconstruction metrics in [`eval`]. File formats, the CLI, and reporting
//! live in the `fact` crate.
#![no_std]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;
