use alloc::vec::Vec;

use super::{FactModel, ModelError};
use crate::data::{destandardize, standardize, ActionChunk, NormStats};
use crate::tensor::{Real, Tensor};

/// FACT model plus the normalization it was trained with; maps raw action
/// chunks to exactly `L` token ids and back.
#[derive(Debug, Clone)]
pub struct FactTokenizer<R> {
    pub model: FactModel<R>,
    pub stats: NormStats,
}

impl<R: Real> FactTokenizer<R> {
    pub fn new(model: FactModel<R>, stats: NormStats) -> Result<Self, ModelError> {
        if stats.dims() != model.config().action_dims {
            return Err(ModelError::InvalidArgument(alloc::format!(
                "normalization has {} dims, model expects {}",
                stats.dims(),
                model.config().action_dims
            )));
        }
        Ok(Self { model, stats })
    }

    pub fn tokenize(&self, chunk: &ActionChunk) -> Result<Vec<u32>, ModelError> {
        let z = standardize(chunk, &self.stats)?;
        let t = Tensor::new(&[z.horizon, z.dims], z.values.iter().map(|&v| R::from_f64(v)).collect())?;
        self.model.tokenize(&t)
    }

    /// Decodes into raw action space.
    pub fn detokenize(
        &self,
        ids: &[u32],
        seed: u64,
        task_id: &str,
        source_offset: usize,
    ) -> Result<ActionChunk, ModelError> {
        let c = self.model.config();
        let t = self.model.detokenize(ids, seed)?;
        let z = ActionChunk::new(
            c.horizon,
            c.action_dims,
            t.data().iter().map(|v| v.as_f64()).collect(),
            task_id,
            source_offset,
        )?;
        Ok(destandardize(&z, &self.stats)?)
    }
}
