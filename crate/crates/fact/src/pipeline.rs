//! End-to-end stages shared by the CLI and the acceptance tests.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use fact_core::baselines::{chunk_coefficients, BinningSpec, DctBasis, FastSpec};
use fact_core::data::{
    chunk_episodes, compute_norm_stats, generate_synthetic_corpus, split_task_ids, standardize, ActionChunk, Episode,
    NormStats,
};
use fact_core::eval::{
    assert_disjoint, balanced_bit_fraction, bit_activation, eval_reconstruction, token_usage, BinningTokenizer,
    EvalOptions, EvalRecord, FactEval, FastTokenizer, Tokenizer,
};
use fact_core::model::FactModel;
use fact_core::tensor::Tensor;
use fact_core::train::{StepMetrics, TrainState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::io::{io_err, read_json, write_json};
use crate::{checkpoint, report, Error, RunConfig};

pub const METRICS_HEADER: &str = "step,loss_total,loss_flow,loss_entropy,loss_commit,lr";

/// Task ids on each side of the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_tasks: BTreeSet<String>,
    pub test_tasks: BTreeSet<String>,
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<Episode>, Error> {
    Ok(generate_synthetic_corpus(&cfg.data, cfg.data_seed)?)
}

pub fn split(cfg: &RunConfig, episodes: &[Episode]) -> Result<SplitManifest, Error> {
    let (train_tasks, test_tasks) =
        split_task_ids(episodes.iter().map(|e| e.task_id.as_str()), cfg.split, cfg.split_seed)?;
    Ok(SplitManifest {
        seed: cfg.split_seed,
        train_tasks,
        test_tasks,
    })
}

/// Normalization statistics over the training tasks only.
pub fn fit_stats(cfg: &RunConfig, episodes: &[Episode]) -> Result<(NormStats, SplitManifest), Error> {
    let manifest = split(cfg, episodes)?;
    let train: Vec<Episode> = episodes
        .iter()
        .filter(|e| manifest.train_tasks.contains(&e.task_id))
        .cloned()
        .collect();
    Ok((compute_norm_stats(&train)?, manifest))
}

/// Standardized chunks on both sides of the split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Vec<ActionChunk>,
    pub test: Vec<ActionChunk>,
    pub stats: NormStats,
}

pub fn chunks(cfg: &RunConfig, episodes: &[Episode]) -> Result<Vec<ActionChunk>, Error> {
    let c = chunk_episodes(episodes, cfg.tokenizer.horizon, cfg.stride)?;
    if c.skipped > 0 {
        log::warn!("skipped {} episodes shorter than the horizon", c.skipped);
    }
    if let Some(bad) = c.chunks.iter().find(|c| c.dims != cfg.tokenizer.action_dims) {
        return Err(Error::Config(format!(
            "episodes have {} dimensions, tokenizer expects {}",
            bad.dims, cfg.tokenizer.action_dims
        )));
    }
    Ok(c.chunks)
}

pub fn prepare(cfg: &RunConfig, episodes: &[Episode], stats: &NormStats) -> Result<Prepared, Error> {
    let manifest = split(cfg, episodes)?;
    let all = chunks(cfg, episodes)?;
    let std = |c: &ActionChunk| standardize(c, stats);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in &all {
        if manifest.test_tasks.contains(&c.task_id) {
            test.push(std(c)?);
        } else {
            train.push(std(c)?);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Runtime(format!(
            "split left {} training and {} test chunks",
            train.len(),
            test.len()
        )));
    }
    assert_disjoint(&train, &test)?;
    Ok(Prepared {
        train,
        test,
        stats: stats.clone(),
    })
}

pub fn to_tensors(chunks: &[ActionChunk]) -> Result<Vec<Tensor<f32>>, Error> {
    chunks
        .iter()
        .map(|c| {
            Tensor::new(&[c.horizon, c.dims], c.values.iter().map(|&v| v as f32).collect())
                .map_err(|e| Error::Runtime(e.to_string()))
        })
        .collect()
}

fn metrics_row(m: &StepMetrics) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        m.step, m.loss_total, m.loss_flow, m.loss_entropy, m.loss_commit, m.lr
    )
}

/// Keeps the header and rows for steps before `step`.
fn truncate_metrics(path: &Path, step: u64) -> Result<(), Error> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut kept = String::from(METRICS_HEADER);
    kept.push('\n');
    for line in text.lines().skip(1) {
        let s: Option<u64> = line.split(',').next().and_then(|v| v.parse().ok());
        if s.is_some_and(|s| s < step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept).map_err(io_err(path))
}

/// Trains on standardized `train` chunks, writing `metrics.csv` and
/// `checkpoint.fact` into `dir`. With `resume`, continues from the
/// checkpoint already in `dir`.
pub fn train(cfg: &RunConfig, train: &[ActionChunk], dir: &Path, resume: bool) -> Result<TrainState<f32>, Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ckpt = dir.join("checkpoint.fact");
    let metrics = dir.join("metrics.csv");
    let mut state = if resume && ckpt.exists() {
        let s = checkpoint::load(&ckpt)?;
        if s.model.config() != &cfg.tokenizer {
            return Err(Error::Config(
                "checkpoint was trained with a different tokenizer config".into(),
            ));
        }
        log::info!("resuming from step {}", s.step);
        s
    } else {
        TrainState::new(FactModel::new(cfg.tokenizer.clone())?, cfg.train.clone())?
    };
    state.config.steps = cfg.train.steps;
    truncate_metrics(&metrics, state.step)?;
    let corpus = to_tensors(train)?;
    let file = fs::OpenOptions::new()
        .append(true)
        .open(&metrics)
        .map_err(io_err(&metrics))?;
    let mut log_file = BufWriter::new(file);
    let every = if cfg.checkpoint_every == 0 {
        u64::MAX
    } else {
        cfg.checkpoint_every
    };
    while state.step < state.config.steps {
        let until = (state.step / every + 1).saturating_mul(every);
        let mut write_err = None;
        state.run(&corpus, until, |m| {
            if let Err(e) = log_file.write_all(metrics_row(m).as_bytes()) {
                write_err.get_or_insert(e);
            }
            if m.step % 500 == 0 {
                log::info!(
                    "step {} flow {:.4} entropy {:.4} commit {:.4}",
                    m.step,
                    m.loss_flow,
                    m.loss_entropy,
                    m.loss_commit
                );
            }
        })?;
        if let Some(e) = write_err {
            return Err(io_err(&metrics)(e));
        }
        log_file.flush().map_err(io_err(&metrics))?;
        checkpoint::save(&state, &ckpt)?;
    }
    if state.step == 0 || !ckpt.exists() {
        checkpoint::save(&state, &ckpt)?;
    }
    Ok(state)
}

/// FAST+ fitted at a quantization scale whose mean code length on a
/// training subsample is closest to `target`.
pub struct FastMatch {
    pub spec: FastSpec,
    pub train_length: f64,
}

pub fn training_coefficients(cfg: &RunConfig, train: &[ActionChunk]) -> Vec<Vec<f64>> {
    let (h, s) = (cfg.tokenizer.horizon, cfg.tokenizer.action_dims);
    let basis = DctBasis::new(h);
    train
        .iter()
        .map(|c| chunk_coefficients(&c.values, h, s, &basis))
        .collect()
}

fn mean_length(spec: &FastSpec, coeffs: &[&Vec<f64>]) -> Result<f64, Error> {
    let mut total = 0usize;
    for c in coeffs {
        total += spec.tokenize_coefficients(c)?.len();
    }
    Ok(total as f64 / coeffs.len() as f64)
}

/// Bisects the quantization scale in log space.
pub fn match_fast(cfg: &RunConfig, coeffs: &[Vec<f64>], target: f64) -> Result<FastMatch, Error> {
    let (h, s) = (cfg.tokenizer.horizon, cfg.tokenizer.action_dims);
    let b = &cfg.baselines;
    let stride = (coeffs.len() / b.match_sample.max(1)).max(1);
    let sample: Vec<&Vec<f64>> = coeffs.iter().step_by(stride).collect();
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e4f64.ln());
    let mut best: Option<FastMatch> = None;
    for _ in 0..30 {
        let scale = ((lo + hi) / 2.0).exp();
        let spec = FastSpec::fit(coeffs, h, s, scale, b.fast_vocab)?;
        let len = mean_length(&spec, &sample)?;
        log::debug!("fast+ scale {scale:.4} -> {len:.2} tokens");
        if len < target {
            lo = scale.ln();
        } else {
            hi = scale.ln();
        }
        let gap = (len - target).abs();
        if best.as_ref().is_none_or(|m| gap < (m.train_length - target).abs()) {
            best = Some(FastMatch {
                spec,
                train_length: len,
            });
        }
        if gap <= 0.25 * b.match_tolerance * target {
            break;
        }
    }
    Ok(best.expect("at least one bisection step"))
}

/// Records for FACT and both baselines plus summary fields.
pub struct Evaluation {
    pub records: Vec<EvalRecord>,
    pub extra: Map<String, Value>,
    pub fast: FastMatch,
}

pub fn evaluate(cfg: &RunConfig, model: &FactModel<f32>, data: &Prepared) -> Result<Evaluation, Error> {
    assert_disjoint(&data.train, &data.test)?;
    let options = EvalOptions {
        seed: cfg.eval.seed,
        samples: cfg.eval.samples,
    };
    let run = |t: &dyn Tokenizer| -> Result<EvalRecord, Error> {
        log::info!("evaluating {}", t.name());
        Ok(eval_reconstruction(t, &data.test, options)?.with_raw(&data.stats))
    };
    let fact = FactEval {
        model,
        batch: cfg.eval.batch,
    };
    let mut records = vec![run(&fact)?];
    let l = model.config().code_length;

    let coeffs = training_coefficients(cfg, &data.train);
    let (h, s) = (cfg.tokenizer.horizon, cfg.tokenizer.action_dims);
    for &scale in &cfg.baselines.fast_scales {
        let spec = FastSpec::fit(&coeffs, h, s, scale, cfg.baselines.fast_vocab)?;
        records.push(run(&FastTokenizer(spec))?);
    }
    let fast = match_fast(cfg, &coeffs, l as f64)?;
    let fast_record = run(&FastTokenizer(fast.spec.clone()))?;
    records.push(fast_record.clone());

    let bins = BinningSpec::fit(
        &data.train,
        cfg.baselines.bins,
        cfg.baselines.clip_low,
        cfg.baselines.clip_high,
    )?;
    records.push(run(&BinningTokenizer(bins.clone()))?);
    let budget_record = run(&BinningTokenizer(bins.with_budget(Some(l))))?;
    records.push(budget_record.clone());

    let stride = (data.train.len() / cfg.eval.usage_sample.max(1)).max(1);
    let mut codes = Vec::new();
    for c in data.train.iter().step_by(stride) {
        codes.push(fact.tokenize(&c.values).map_err(|e| Error::Runtime(e.to_string()))?);
    }
    let activation = bit_activation(&codes, model.config().bits);
    let fact_mse = records[0].mse;

    let mut extra = Map::new();
    extra.insert(
        "comparison".into(),
        json!({
            "fact_mse": fact_mse,
            "fact_code_length": l,
            "fast_matched_mse": fast_record.mse,
            "fast_matched_code_length": fast_record.code_length,
            "fast_matched_train_code_length": fast.train_length,
            "fast_matched_scale": fast.spec.quant_scale,
            "fast_over_fact": fast_record.mse / fact_mse,
            "binning_budget_mse": budget_record.mse,
            "binning_over_fact": budget_record.mse / fact_mse,
        }),
    );
    extra.insert(
        "codebook".into(),
        json!({
            "chunks": codes.len(),
            "balanced_bit_fraction": balanced_bit_fraction(&activation, 0.1, 0.9),
            "token_usage": token_usage(&codes, model.config().vocab_size() as usize),
            "bit_activation": activation,
        }),
    );
    extra.insert(
        "split".into(),
        json!({ "train_chunks": data.train.len(), "test_chunks": data.test.len() }),
    );
    Ok(Evaluation { records, extra, fast })
}

/// Generates data, fits statistics, trains, evaluates and reports into `dir`.
/// The resolved config is written first so the directory alone reproduces
/// every artifact.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<Evaluation, Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("config.json"), cfg)?;
    let episodes = generate(cfg)?;
    crate::io::write_episodes(&dir.join("episodes.jsonl"), &episodes)?;
    let (stats, manifest) = fit_stats(cfg, &episodes)?;
    write_json(&dir.join("norm_stats.json"), &stats)?;
    write_json(&dir.join("split.json"), &manifest)?;
    let data = prepare(cfg, &episodes, &stats)?;
    let state = train(cfg, &data.train, dir, false)?;
    let eval = evaluate(cfg, &state.model, &data)?;
    write_json(&dir.join("fast_bpe.json"), &eval.fast.spec.bpe)?;
    let summary = report::summary(
        &eval.records,
        cfg.tokenizer.code_length,
        cfg.tokenizer.bits,
        eval.extra.clone(),
    );
    report::emit(&eval.records, &summary, dir)?;
    Ok(eval)
}

/// Reloads the config echoed into `dir`.
pub fn load_config(dir: &Path) -> Result<RunConfig, Error> {
    let cfg: RunConfig = read_json(&dir.join("config.json"))?;
    cfg.validate()?;
    Ok(cfg)
}
