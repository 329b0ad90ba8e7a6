//! Trajectory data: episodes, fixed-horizon action chunks, standardization,
//! task-level splitting, and the seeded synthetic corpus.

mod norm;
mod split;
pub mod synth;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use norm::{compute_norm_stats, destandardize, standardize, NormStats, STD_FLOOR};
pub use split::{split_task_ids, task_level_split, SplitRatio};
pub use synth::{generate_synthetic_corpus, CorpusSpec, Family};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("episode {task_id}: row {row} has {got} entries, expected {expected}")]
    RaggedEpisode {
        task_id: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown generator family {0:?}")]
    UnknownFamily(String),
    #[error("task-level split needs at least 2 distinct tasks, got {0}")]
    TooFewTasks(usize),
}

/// One recorded trajectory: `T` rows of `S` state values sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task_id: String,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl Episode {
    pub fn steps(&self) -> usize {
        self.states.len()
    }

    pub fn dims(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Checks that every row has `dims()` finite entries.
    pub fn validate(&self) -> Result<(), DataError> {
        let dims = self.dims();
        if dims == 0 {
            return Err(DataError::Empty("episode states"));
        }
        for (row, r) in self.states.iter().enumerate() {
            if r.len() != dims {
                return Err(DataError::RaggedEpisode {
                    task_id: self.task_id.clone(),
                    row,
                    expected: dims,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite("episode states"));
            }
        }
        Ok(())
    }
}

/// An `H x S` window of consecutive actions, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub horizon: usize,
    pub dims: usize,
    pub values: Vec<f64>,
    pub task_id: String,
    pub source_offset: usize,
}

impl ActionChunk {
    pub fn new(
        horizon: usize,
        dims: usize,
        values: Vec<f64>,
        task_id: impl Into<String>,
        source_offset: usize,
    ) -> Result<Self, DataError> {
        if values.len() != horizon * dims {
            return Err(DataError::DimensionMismatch {
                expected: horizon * dims,
                got: values.len(),
            });
        }
        Ok(Self {
            horizon,
            dims,
            values,
            task_id: task_id.into(),
            source_offset,
        })
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.values[step * self.dims..(step + 1) * self.dims]
    }

    /// Same metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, ..self.clone() }
    }
}

/// Result of [`chunk_episodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Chunking {
    pub chunks: Vec<ActionChunk>,
    /// Episodes shorter than the horizon.
    pub skipped: usize,
}

/// Sliding windows of `horizon` steps starting at multiples of `stride`.
/// The trailing remainder of each episode is dropped.
pub fn chunk_episodes(episodes: &[Episode], horizon: usize, stride: usize) -> Result<Chunking, DataError> {
    if stride == 0 || horizon == 0 {
        return Err(DataError::InvalidArgument(alloc::format!(
            "horizon {horizon} and stride {stride} must be positive"
        )));
    }
    let mut chunks = Vec::new();
    let mut skipped = 0;
    for ep in episodes {
        if ep.steps() < horizon {
            skipped += 1;
            continue;
        }
        ep.validate()?;
        let dims = ep.dims();
        let mut offset = 0;
        while offset + horizon <= ep.steps() {
            let values = ep.states[offset..offset + horizon]
                .iter()
                .flat_map(|r| r.iter().copied())
                .collect();
            chunks.push(ActionChunk {
                horizon,
                dims,
                values,
                task_id: ep.task_id.clone(),
                source_offset: offset,
            });
            offset += stride;
        }
    }
    Ok(Chunking { chunks, skipped })
}
