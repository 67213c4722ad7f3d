use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use stance_core::commands::{self, CachePolicy, EvaluateOptions};
use stance_core::config::{BackendKind, RunConfig};
use stance_core::{Partition, PromptKind};

/// Stance-detection evaluation harness.
#[derive(Parser, Debug)]
#[command(name = "stance", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Topic key, e.g. Abortion.
    #[arg(long, global = true)]
    topic: Option<String>,

    /// Prompt family: zero_shot, few_shot or CoT.
    #[arg(long, global = true, value_parser = parse_prompt)]
    prompt: Option<PromptKind>,

    /// Backend kind: http_chat or replay.
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<BackendKind>,

    /// Seed for the train/validation split.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean, deduplicate and partition the raw tweet files.
    Preprocess,
    /// Estimate the API cost of prompting the validation and test sets.
    EstimateCost,
    /// Prompt the backend for every validation/test record.
    Predict {
        /// Set an existing predictions.csv aside as predictions_cached.csv first.
        #[arg(long, conflicts_with = "restore_cached")]
        fresh: bool,
        /// Put predictions_cached.csv back in place before resuming.
        #[arg(long)]
        restore_cached: bool,
        /// Responses file (ID,response) for the replay backend.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Score a run's predictions.
    Evaluate {
        /// Run directory to score instead of the configured one.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Partitions to score (comma separated); vali,test by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_partition)]
        partitions: Vec<Partition>,
    },
    /// Build the cross-run comparison table and confusion-matrix figures.
    Summarize {
        /// Keep only rows for this partition.
        #[arg(long, value_parser = parse_partition)]
        partition: Option<Partition>,
    },
}

fn parse_prompt(s: &str) -> Result<PromptKind, String> {
    s.parse()
        .map_err(|e: stance_core::prompts::PromptError| e.to_string())
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
        .map_err(|e: stance_core::config::ConfigError| e.to_string())
}

fn parse_partition(s: &str) -> Result<Partition, String> {
    s.parse()
        .map_err(|e: stance_core::label::UnknownPartition| e.to_string())
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(topic) = &global.topic {
        cfg.topic = topic.clone();
    }
    if let Some(kind) = global.prompt {
        cfg.prompt_kind = kind;
    }
    if let Some(kind) = global.backend {
        cfg.backend.kind = kind;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Preprocess => {
            let report = commands::cmd_preprocess(&cfg)?;
            println!("{report}");
        }
        Command::EstimateCost => {
            let estimate = commands::cmd_estimate_cost(&cfg)?;
            println!(
                "{} prompt tokens and completion allowance: {}",
                cfg.prompt_kind, estimate.token_count
            );
            println!("Estimated total cost: ${}", estimate.total_usd);
        }
        Command::Predict {
            fresh,
            restore_cached,
            replay,
        } => {
            if let Some(path) = replay {
                cfg.backend.kind = BackendKind::Replay;
                cfg.backend.replay_path = Some(path);
            }
            let policy = match (fresh, restore_cached) {
                (true, _) => CachePolicy::Fresh,
                (_, true) => CachePolicy::Restore,
                _ => CachePolicy::Resume,
            };
            let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
            let report = runtime.block_on(commands::cmd_predict(&cfg, policy))?;
            println!("{report}");
        }
        Command::Evaluate {
            run_dir,
            partitions,
        } => {
            let report = commands::cmd_evaluate(
                &cfg,
                &EvaluateOptions {
                    run_dir,
                    partitions,
                },
            )?;
            println!("{report}");
        }
        Command::Summarize { partition } => {
            let report = commands::cmd_summarize(&cfg, partition)?;
            println!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
