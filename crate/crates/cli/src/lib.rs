//! `gppx`: detect GPP extremes on gridded data with a VAE and SSA baseline.
//!
//! The library half holds the command implementations so integration tests
//! can drive them without spawning processes.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};
use pipeline::Context;

#[derive(Debug, Parser)]
#[command(name = "gppx", version, about = "GPP extreme-event detection with a VAE and SSA")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for (region, period) jobs; overrides the config.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic grid and its injected-event labels.
    Synth,
    /// Train one VAE per region and period.
    Train,
    /// Thresholds, flags, frequency maps and regional series.
    Extremes,
    /// Train every point of a small hyperparameter grid.
    Gridsearch,
    /// Agreement statistics and the threshold table for VAE vs SSA.
    Compare,
}

impl Cli {
    /// Load the config and apply command-line overrides.
    pub fn load_config(&self) -> Result<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
        let mut config = RunConfig::load(path)?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            config.jobs = Some(jobs);
        }
        config.validate()?;
        Ok(config)
    }
}

/// Run one parsed command and return its summary text.
pub fn run(cli: &Cli) -> Result<String> {
    let config = cli.load_config()?;
    if cli.command == Command::Synth {
        return pipeline::cmd_synth(config);
    }
    let ctx = Context::load(config)?;
    match cli.command {
        Command::Synth => unreachable!("handled above"),
        Command::Train => pipeline::cmd_train(&ctx),
        Command::Extremes => pipeline::cmd_extremes(&ctx),
        Command::Gridsearch => pipeline::cmd_gridsearch(&ctx),
        Command::Compare => pipeline::cmd_compare(&ctx),
    }
}

/// Parse `args`, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
