use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fact::io::{read_episodes, read_json, read_jsonl, write_json, write_jsonl, ChunkRecord, TokenRecord};
use fact::sweep::SweepEntry;
use fact::{checkpoint, pipeline, report, sweep, Error, RunConfig};
use fact_core::data::{ActionChunk, NormStats};
use fact_core::eval::{chunk_seed, EvalRecord};
use fact_core::model::FactTokenizer;

#[derive(Parser)]
#[command(
    name = "fact",
    version,
    about = "Action-chunk tokenization: FACT and baseline tokenizers"
)]
struct Cli {
    /// Run configuration (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. --set train.steps=500 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Use one seed for data, split, initialization, training and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Parallel sweep workers.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitSide {
    All,
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic episode corpus.
    GenData,
    /// Split tasks and fit normalization statistics on the training side.
    FitStats {
        #[arg(long)]
        episodes: PathBuf,
    },
    /// Train FACT; writes checkpoint.fact and metrics.csv.
    Train {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Chunk episodes and write FACT token ids as JSONL.
    Tokenize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitSide,
    },
    /// Reconstruct chunks (original units) from token-id JSONL.
    Detokenize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Evaluate a trained FACT checkpoint against the baselines.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
    },
    /// Train and evaluate FACT over the configured code-length/bit grid.
    Sweep {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        stats: PathBuf,
    },
    /// Render records (sweep.jsonl or a JSONL of records) into a report.
    Report {
        #[arg(long)]
        records: Vec<PathBuf>,
    },
    /// Full pipeline: gen-data, fit-stats, train, eval, report.
    Run,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.kind().as_str().unwrap_or("invalid arguments");
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("fact: error: usage: {message}: {first}");
            eprintln!("{}", Cli::command_usage());
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                Error::Config(_) => "config",
                Error::Input { .. } => "input",
                Error::Io { .. } => "io",
                Error::Checkpoint(_) => "checkpoint",
                Error::Runtime(_) => "runtime",
            };
            let text = e.to_string().replace('\n', " ");
            eprintln!("fact: error: {kind}: {text}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

impl Cli {
    fn command_usage() -> String {
        use clap::CommandFactory;
        Cli::command().render_help().to_string()
    }
}

fn require(path: &Path) -> Result<(), Error> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Input {
            path: path.display().to_string(),
            reason: "no such file".into(),
        })
    }
}

fn load_tokenizer(ckpt: &Path, stats: &Path, cfg: &RunConfig) -> Result<FactTokenizer<f32>, Error> {
    require(ckpt)?;
    let state = checkpoint::load(ckpt)?;
    let stats: NormStats = read_json(stats)?;
    if state.model.config().horizon != cfg.tokenizer.horizon
        || state.model.config().action_dims != cfg.tokenizer.action_dims
    {
        log::warn!("checkpoint shape differs from config; using the checkpoint's");
    }
    Ok(FactTokenizer::new(state.model, stats)?)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    let out = &cli.out;
    std::fs::create_dir_all(out).map_err(fact::io::io_err(out))?;
    if !matches!(cli.command, Command::Run) {
        write_json(&out.join("config.json"), &cfg)?;
    }
    match &cli.command {
        Command::GenData => {
            let episodes = pipeline::generate(&cfg)?;
            fact::io::write_episodes(&out.join("episodes.jsonl"), &episodes)?;
            log::info!("wrote {} episodes", episodes.len());
        }
        Command::FitStats { episodes } => {
            let episodes = read_episodes(episodes)?;
            let (stats, manifest) = pipeline::fit_stats(&cfg, &episodes)?;
            write_json(&out.join("norm_stats.json"), &stats)?;
            write_json(&out.join("split.json"), &manifest)?;
        }
        Command::Train {
            episodes,
            stats,
            resume,
        } => {
            let episodes = read_episodes(episodes)?;
            let stats: NormStats = read_json(stats)?;
            let data = pipeline::prepare(&cfg, &episodes, &stats)?;
            let state = pipeline::train(&cfg, &data.train, out, *resume)?;
            log::info!("trained to step {}", state.step);
        }
        Command::Tokenize {
            checkpoint,
            stats,
            episodes,
            split,
        } => {
            let tok = load_tokenizer(checkpoint, stats, &cfg)?;
            let episodes = read_episodes(episodes)?;
            let manifest = pipeline::split(&cfg, &episodes)?;
            let chunks: Vec<ActionChunk> = pipeline::chunks(&cfg, &episodes)?
                .into_iter()
                .filter(|c| match split {
                    SplitSide::All => true,
                    SplitSide::Train => manifest.train_tasks.contains(&c.task_id),
                    SplitSide::Test => manifest.test_tasks.contains(&c.task_id),
                })
                .collect();
            let mut records = Vec::with_capacity(chunks.len());
            for c in &chunks {
                records.push(TokenRecord {
                    task_id: c.task_id.clone(),
                    offset: c.source_offset,
                    tokens: tok.tokenize(c)?,
                });
            }
            write_jsonl(&out.join("tokens.jsonl"), &records)?;
            log::info!("tokenized {} chunks", records.len());
        }
        Command::Detokenize {
            checkpoint,
            stats,
            tokens,
        } => {
            let tok = load_tokenizer(checkpoint, stats, &cfg)?;
            let records: Vec<TokenRecord> = read_jsonl(tokens)?;
            let mut chunks = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                let seed = chunk_seed(cfg.eval.seed, i, 0);
                let c = tok.detokenize(&r.tokens, seed, &r.task_id, r.offset)?;
                chunks.push(ChunkRecord::from(&c));
            }
            write_jsonl(&out.join("chunks.jsonl"), &chunks)?;
            log::info!("reconstructed {} chunks", chunks.len());
        }
        Command::Eval {
            checkpoint,
            stats,
            episodes,
        } => {
            require(checkpoint)?;
            let state = checkpoint::load(checkpoint)?;
            let episodes = read_episodes(episodes)?;
            let stats: NormStats = read_json(stats)?;
            let mut cfg = cfg.clone();
            cfg.tokenizer = state.model.config().clone();
            let data = pipeline::prepare(&cfg, &episodes, &stats)?;
            let eval = pipeline::evaluate(&cfg, &state.model, &data)?;
            write_json(&out.join("fast_bpe.json"), &eval.fast.spec.bpe)?;
            let summary = report::summary(&eval.records, cfg.tokenizer.code_length, cfg.tokenizer.bits, eval.extra);
            report::emit(&eval.records, &summary, out)?;
        }
        Command::Sweep { episodes, stats } => {
            let episodes = read_episodes(episodes)?;
            let stats: NormStats = read_json(stats)?;
            let data = pipeline::prepare(&cfg, &episodes, &stats)?;
            let entries = sweep::sweep(&cfg, &data, out, cli.jobs)?;
            let records: Vec<EvalRecord> = entries.into_iter().map(|e| e.record).collect();
            let summary = report::summary(
                &records,
                cfg.tokenizer.code_length,
                cfg.tokenizer.bits,
                Default::default(),
            );
            report::emit(&records, &summary, out)?;
        }
        Command::Report { records } => {
            if records.is_empty() {
                return Err(Error::Config("report needs at least one --records file".into()));
            }
            let mut all = Vec::new();
            for path in records {
                all.extend(read_records(path)?);
            }
            let summary = report::summary(&all, cfg.tokenizer.code_length, cfg.tokenizer.bits, Default::default());
            report::emit(&all, &summary, out)?;
        }
        Command::Run => {
            let eval = pipeline::run(&cfg, out)?;
            for r in &eval.records {
                log::info!("{} L={:.1} mse={:.6}", r.tokenizer, r.code_length, r.mse);
            }
        }
    }
    Ok(())
}

/// Accepts sweep entries or bare records, one JSON object per line.
fn read_records(path: &Path) -> Result<Vec<EvalRecord>, Error> {
    let values: Vec<serde_json::Value> = read_jsonl(path)?;
    values
        .into_iter()
        .map(|v| {
            let parsed = if v.get("record").is_some() {
                serde_json::from_value::<SweepEntry>(v).map(|e| e.record)
            } else {
                serde_json::from_value::<EvalRecord>(v)
            };
            parsed.map_err(|e| Error::Input {
                path: path.display().to_string(),
                reason: e.to_string(),
            })
        })
        .collect()
}
