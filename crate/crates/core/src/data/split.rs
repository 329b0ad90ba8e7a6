use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionChunk, DataError};

/// Train:test proportion in whole parts, e.g. 40:1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 40, test: 1 }
    }
}

impl SplitRatio {
    /// Number of held-out tasks out of `tasks`: `ceil(tasks * test / (train + test))`,
    /// at least one, leaving at least one training task.
    pub fn test_tasks(&self, tasks: usize) -> usize {
        let parts = (self.train + self.test) as usize;
        let n = (tasks * self.test as usize).div_ceil(parts);
        n.max(1).min(tasks.saturating_sub(1))
    }
}

/// Shuffles the distinct task ids with `seed` and partitions them.
pub fn split_task_ids<'a>(
    task_ids: impl IntoIterator<Item = &'a str>,
    ratio: SplitRatio,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>), DataError> {
    if ratio.train == 0 || ratio.test == 0 {
        return Err(DataError::InvalidArgument(alloc::format!(
            "split ratio {}:{} must have positive parts",
            ratio.train,
            ratio.test
        )));
    }
    let distinct: BTreeSet<&str> = task_ids.into_iter().collect();
    if distinct.len() < 2 {
        return Err(DataError::TooFewTasks(distinct.len()));
    }
    let mut ids: Vec<&str> = distinct.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = ratio.test_tasks(ids.len());
    let test = ids[..n_test].iter().map(|s| String::from(*s)).collect();
    let train = ids[n_test..].iter().map(|s| String::from(*s)).collect();
    Ok((train, test))
}

/// Partitions chunks so that no task id appears on both sides.
pub fn task_level_split(
    chunks: &[ActionChunk],
    ratio: SplitRatio,
    seed: u64,
) -> Result<(Vec<ActionChunk>, Vec<ActionChunk>), DataError> {
    let (_, test_ids) = split_task_ids(chunks.iter().map(|c| c.task_id.as_str()), ratio, seed)?;
    Ok(chunks.iter().cloned().partition(|c| !test_ids.contains(&c.task_id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn chunks_for(tasks: usize) -> Vec<ActionChunk> {
        (0..tasks)
            .flat_map(|t| {
                (0..3).map(move |o| ActionChunk::new(1, 1, alloc::vec![0.0], format!("task-{t:03}"), o).unwrap())
            })
            .collect()
    }

    fn task_set(chunks: &[ActionChunk]) -> BTreeSet<String> {
        chunks.iter().map(|c| c.task_id.clone()).collect()
    }

    #[test]
    fn forty_one_tasks_at_forty_to_one() {
        let (train, test) = task_level_split(&chunks_for(41), SplitRatio::default(), 7).unwrap();
        assert_eq!(task_set(&train).len(), 40);
        assert_eq!(task_set(&test).len(), 1);
    }

    #[test]
    fn two_tasks_minimum_rule() {
        let (train, test) = task_level_split(&chunks_for(2), SplitRatio::default(), 7).unwrap();
        assert_eq!(task_set(&train).len(), 1);
        assert_eq!(task_set(&test).len(), 1);
    }

    #[test]
    fn single_task_rejected() {
        assert_eq!(
            task_level_split(&chunks_for(1), SplitRatio::default(), 0),
            Err(DataError::TooFewTasks(1))
        );
    }

    #[test]
    fn seed_changes_partition_not_sizes() {
        let chunks = chunks_for(100);
        let (_, a) = task_level_split(&chunks, SplitRatio::default(), 1).unwrap();
        let (_, b) = task_level_split(&chunks, SplitRatio::default(), 2).unwrap();
        assert_eq!(task_set(&a).len(), 3);
        assert_eq!(task_set(&b).len(), 3);
        assert_ne!(task_set(&a), task_set(&b));
    }
}
