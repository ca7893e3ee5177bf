use std::path::PathBuf;
use std::process::ExitCode;

use chanalloc::harness::{self, ExperimentConfig, Method};
use chanalloc::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chanalloc", version, about = "WLAN channel allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (.json or .toml); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<String>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Number of evaluation episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Steps per evaluation episode.
    #[arg(long)]
    horizon: Option<usize>,
    /// Write a JSON-lines trace of evaluation episodes.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learning method and evaluate its best checkpoint.
    Train(Common),
    /// Evaluate a saved checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the SAP-only or random baseline.
    Baseline(Common),
    /// Summarize two or more artifact directories.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Also write summary.csv and pairwise.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(method) = &common.method {
        config.method = method.parse::<Method>()?;
    }
    if let Some(episodes) = common.episodes {
        config.eval.episodes = episodes;
    }
    if let Some(horizon) = common.horizon {
        config.eval.horizon = horizon;
    }
    config.eval.trace |= common.trace;
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let art = harness::run_train(&resolve(&common)?, &common.out)?;
            println!("wrote {}", art.dir.display());
        }
        Command::Eval { common, checkpoint } => {
            let art = harness::run_eval(&resolve(&common)?, &checkpoint, &common.out)?;
            println!("wrote {}", art.dir.display());
        }
        Command::Baseline(common) => {
            let mut config = resolve(&common)?;
            if common.method.is_none() && common.config.is_none() {
                config.method = Method::SapOnly;
            }
            let art = harness::run_baseline(&config, &common.out)?;
            println!("wrote {}", art.dir.display());
        }
        Command::Compare { dirs, out } => {
            let cmp = harness::compare(&dirs)?;
            print!("{}", cmp.to_text());
            if let Some(out) = out {
                cmp.write(&out)?;
            }
        }
    }
    Ok(())
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "kind": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "), 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &error_chain(&e), 1),
    }
}

fn error_chain(e: &Error) -> String {
    let mut message = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let text = s.to_string();
        if !message.contains(&text) {
            message.push_str(": ");
            message.push_str(&text);
        }
        source = s.source();
    }
    message
}
