use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use oboe_cli::config::DEFAULT_CONFIG;
use oboe_cli::{run_stage, CliError, RunConfig, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Collect,
    Train,
    Counterfactual,
    Report,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Game {
    Cleanup,
    Harvest,
}

/// Run stages of the OBOE pipeline.
#[derive(Debug, Parser)]
#[command(name = "oboe", version)]
struct Args {
    command: Command,
    /// TOML run configuration; the bundled desk configuration when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to one or more games.
    #[arg(long, value_enum)]
    game: Vec<Game>,
    /// Override any setting, e.g. `cleanup.observational_episodes=20`.
    #[arg(long = "stage-override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    workers: Option<usize>,
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn run(args: Args) -> Result<(), CliError> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!("out_dir={}", quoted(&out.to_string_lossy())));
    }
    if !args.game.is_empty() {
        let names: Vec<String> = args
            .game
            .iter()
            .map(|g| quoted(match g {
                Game::Cleanup => "cleanup",
                Game::Harvest => "harvest",
            }))
            .collect();
        overrides.push(format!("games=[{}]", names.join(",")));
    }
    if let Some(w) = args.workers {
        overrides.push(format!("workers={w}"));
    }
    let config = match &args.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::from_toml(DEFAULT_CONFIG, &overrides)?,
    };
    let stage = match args.command {
        Command::Collect => Stage::Collect,
        Command::Train => Stage::Train,
        Command::Counterfactual => Stage::Counterfactual,
        Command::Report => Stage::Report,
        Command::All => Stage::All,
    };
    run_stage(&config, stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
