//! Code-length by bit-depth grid over FACT, persisted one line per point so
//! an interrupted sweep resumes where it stopped.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;

use fact_core::eval::{eval_reconstruction, EvalOptions, EvalRecord, FactEval};
use serde::{Deserialize, Serialize};

use crate::io::{append_jsonl, read_jsonl};
use crate::pipeline::{self, Prepared};
use crate::{Error, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub code_length: usize,
    pub bits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub point: GridPoint,
    pub record: EvalRecord,
}

pub fn grid(cfg: &RunConfig) -> Vec<GridPoint> {
    let g = &cfg.sweep;
    let mut points = Vec::new();
    for &seed in &g.seeds {
        for &bits in &g.bits {
            for &code_length in &g.code_lengths {
                points.push(GridPoint {
                    code_length,
                    bits,
                    seed,
                });
            }
        }
    }
    points
}

/// Config for one grid point: the base config with `L`, `D` and seeds replaced.
pub fn point_config(cfg: &RunConfig, p: GridPoint) -> RunConfig {
    let mut c = cfg.clone();
    c.tokenizer.code_length = p.code_length;
    c.tokenizer.bits = p.bits;
    c.tokenizer.seed = p.seed;
    c.train.seed = p.seed;
    c.eval.seed = p.seed;
    c
}

fn run_point(cfg: &RunConfig, data: &Prepared, p: GridPoint, dir: &Path) -> Result<EvalRecord, Error> {
    let c = point_config(cfg, p);
    c.validate()?;
    let sub = dir.join(format!("L{}_D{}_s{}", p.code_length, p.bits, p.seed));
    let state = pipeline::train(&c, &data.train, &sub, true)?;
    let fact = FactEval {
        model: &state.model,
        batch: c.eval.batch,
    };
    let options = EvalOptions {
        seed: c.eval.seed,
        samples: c.eval.samples,
    };
    Ok(eval_reconstruction(&fact, &data.test, options)?.with_raw(&data.stats))
}

/// Runs every grid point not already in `dir/sweep.jsonl`, up to `jobs` at
/// a time. Points whose training fails are recorded with NaN MSE and the
/// reason. Returns all entries in grid order.
pub fn sweep(cfg: &RunConfig, data: &Prepared, dir: &Path, jobs: usize) -> Result<Vec<SweepEntry>, Error> {
    std::fs::create_dir_all(dir).map_err(crate::io::io_err(dir))?;
    let log_path = dir.join("sweep.jsonl");
    let done: Vec<SweepEntry> = if log_path.exists() {
        read_jsonl(&log_path)?
    } else {
        Vec::new()
    };
    let finished: BTreeSet<GridPoint> = done.iter().map(|e| e.point).collect();
    let todo: Vec<GridPoint> = grid(cfg).into_iter().filter(|p| !finished.contains(p)).collect();
    log::info!("{} grid points done, {} to run", finished.len(), todo.len());

    let queue = Mutex::new(todo.into_iter());
    let sink = Mutex::new(Ok::<(), Error>(()));
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            scope.spawn(|| loop {
                let Some(p) = queue.lock().expect("queue lock").next() else {
                    break;
                };
                log::info!("sweep point L={} D={} seed={}", p.code_length, p.bits, p.seed);
                let record = run_point(cfg, data, p, dir).unwrap_or_else(|e| {
                    EvalRecord::failed("fact".into(), p.code_length as f64, 1 << p.bits, p.seed, e.to_string())
                });
                let mut status = sink.lock().expect("sink lock");
                if status.is_ok() {
                    *status = append_jsonl(&log_path, &SweepEntry { point: p, record });
                }
            });
        }
    });
    sink.into_inner().expect("sink lock")?;

    let mut entries: Vec<SweepEntry> = read_jsonl(&log_path)?;
    let order = grid(cfg);
    entries.retain(|e| order.contains(&e.point));
    entries.sort_by_key(|e| order.iter().position(|p| *p == e.point));
    entries.dedup_by_key(|e| e.point);
    Ok(entries)
}
