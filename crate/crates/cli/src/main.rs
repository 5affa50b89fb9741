mod commands;
mod config;
mod index_file;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{AppConfig, BackendKind, ConfigLayer, CONFIG_ENV};

/// Retrieval-augmented multi-agent sarcasm detection.
#[derive(Debug, Parser)]
#[command(name = "ramsd", version)]
struct Cli {
    /// TOML config file (also read from RAMSD_CONFIG).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,

    /// Seed for the mock backend.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Exemplars retrieved per class.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Include agent outputs, planner analysis and rationales in verdicts.
    #[arg(long, global = true)]
    trace: bool,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed a labeled JSONL corpus and write the retrieval index.
    Ingest { corpus: PathBuf },

    /// Classify one text and print the verdict as JSON.
    Classify {
        text: String,
        /// Conversational context preceding the text.
        #[arg(long)]
        context: Option<String>,
    },

    /// Run a labeled dataset and write verdicts.jsonl and metrics.json.
    Evaluate {
        dataset: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },

    /// Evaluate every k in a range and emit k,accuracy,macro_f1 CSV.
    SweepK {
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Summarize per-stage time from a verdict JSONL file.
    Timings {
        verdicts: PathBuf,
        /// Machine-readable output with unrounded values.
        #[arg(long)]
        json: bool,
    },
}

fn load_config(cli: &Cli) -> Result<AppConfig, CliError> {
    let flags = ConfigLayer {
        backend: cli.backend,
        seed: cli.seed,
        k: cli.k,
        ..Default::default()
    };
    let lookup = |name: &str| std::env::var(name).ok();
    let env = ConfigLayer::from_env(&lookup)?;
    let path = cli.config.clone().or_else(|| lookup(CONFIG_ENV).filter(|p| !p.is_empty()).map(PathBuf::from));
    let file = match path {
        Some(p) => ConfigLayer::load(&p)?,
        None => ConfigLayer::default(),
    };
    Ok(config::resolve(flags, env, file)?)
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Timings { verdicts, json } => commands::run_timings(verdicts, *json, &mut out),
        Command::Ingest { corpus } => commands::ingest(&load_config(&cli)?, corpus, &mut out).await,
        Command::Classify { text, context } => {
            commands::classify(&load_config(&cli)?, text, context.clone(), cli.trace, &mut out).await
        }
        Command::Evaluate { dataset, out: dir } => {
            commands::run_evaluate(&load_config(&cli)?, dataset, dir, cli.trace, cli.force, &mut out).await
        }
        Command::SweepK {
            dataset,
            k_min,
            k_max,
            out: file,
        } => {
            commands::run_sweep(&load_config(&cli)?, dataset, *k_min, *k_max, file.as_ref(), cli.force, &mut out)
                .await
        }
    }?;
    out.flush().map_err(|e| CliError::Output(e.to_string()))
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
