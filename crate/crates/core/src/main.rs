use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use itequant::harness::{self, AnalysisConfig, Command};
use itequant::Error;

/// Randomization inference on quantiles of individual treatment effects.
#[derive(Parser)]
#[command(name = "itequant", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact limits when control outcomes are known to lie below a detection limit.
    Placebo(Opts),
    /// Completely randomized design, methods M1, M2 or M3.
    Cre(Opts),
    /// Stratified design.
    Stratified(Opts),
    /// Matched pairs under a range of sensitivity parameters.
    Sensitivity(Opts),
    /// Repeated-sampling comparison of methods using the input as outcome pools.
    Simulate(Opts),
    /// Limits for the sample average treatment effect.
    Sate(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML settings file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: AnalysisConfig,
}

fn execute(cmd: Command, opts: Opts) -> itequant::Result<()> {
    let base = match &opts.config {
        Some(p) => AnalysisConfig::load(p)?,
        None => AnalysisConfig::default(),
    };
    let cfg = opts.settings.overlay(base);
    let out = cfg.output()?.to_path_buf();
    let format = cfg.format()?;
    let report = harness::run(cmd, &cfg)?;
    harness::emit_report(&report, &out, format)?;
    log::info!("wrote {} results to {}", cmd.name(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, opts) = match cli.command {
        Cmd::Placebo(o) => (Command::Placebo, o),
        Cmd::Cre(o) => (Command::Cre, o),
        Cmd::Stratified(o) => (Command::Stratified, o),
        Cmd::Sensitivity(o) => (Command::Sensitivity, o),
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::Sate(o) => (Command::Sate, o),
    };
    match execute(cmd, opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        3
    } else {
        2
    }
}
