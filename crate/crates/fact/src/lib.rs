//! File formats, training runs, evaluation reports and the command-line
//! front end for the FACT action tokenizer.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::RunConfig;

/// Errors surfaced to the command line. Validation problems exit with 1,
/// runtime failures with 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid input {path}: {reason}")]
    Input { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input { .. } => 1,
            _ => 2,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    fact_core::data::DataError,
    fact_core::model::ModelError,
    fact_core::train::TrainError,
    fact_core::baselines::BaselineError,
    fact_core::eval::EvalError
);
