use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csrecon::pipeline::{run_command, Command, PipelineConfig, RunContext};
use csrecon::Error;

/// Cascaded dual-domain reconstruction of undersampled multi-coil MRI.
#[derive(Parser)]
#[command(name = "csrecon", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// TOML config (or a previous run manifest); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed, overriding the config and CSRECON_SEED.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Single-threaded numeric paths.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory shared by all stages.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic multi-coil volumes and the train/val/test split.
    Synth,
    /// Generate Poisson-disc sampling masks.
    Mask,
    /// Train the configured cascade.
    Train {
        /// Continue from the saved training state.
        #[arg(long)]
        resume: bool,
    },
    /// Reconstruct the test volumes.
    Reconstruct,
    /// Score models against the fully sampled reference.
    Evaluate,
    /// Time per-slice reconstruction.
    Bench,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = cli.global;
    let (command, resume) = match cli.command {
        Cmd::Synth => (Command::Synth, false),
        Cmd::Mask => (Command::Mask, false),
        Cmd::Train { resume } => (Command::Train, resume),
        Cmd::Reconstruct => (Command::Reconstruct, false),
        Cmd::Evaluate => (Command::Evaluate, false),
        Cmd::Bench => (Command::Bench, false),
    };
    let mut config = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::from_text_with_env("", std::env::vars())?,
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    let ctx = RunContext { out: g.out, config_path: g.config, deterministic: g.deterministic, resume };
    let manifest = run_command(command, &config, &ctx)?;
    for output in &manifest.outputs {
        println!("{}", ctx.out.join(output).display());
    }
    Ok(())
}
