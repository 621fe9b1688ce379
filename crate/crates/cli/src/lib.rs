//! Command-line driver for the benchmark pipeline.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "hcvrd", version, about = "Human-centric visual relationship benchmark pipeline")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for data-parallel stages (1 = fully sequential).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for splits, training and filtering (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (for `synth`: where the fixture is written).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set infer.k=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// More log output (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Normalise raw annotations into the cleaned vocabulary.
    Ingest,
    /// Build train / test-seen / test-zero-shot splits.
    Split,
    /// Dataset statistics over the cleaned annotations.
    Stats,
    /// Score web samples and keep the most confident fraction per class.
    FilterWeb,
    /// Train the two-branch metric model.
    Train,
    /// Predict relationships for the test splits.
    Infer,
    /// Recall@K for every configured suite.
    Eval,
    /// Aggregate evaluation outputs into one summary.
    Report,
    /// Run every stage in order.
    Pipeline,
    /// Write the synthetic 100-image fixture and a matching config.
    Synth,
}

impl Cli {
    pub fn log_level(&self) -> log::LevelFilter {
        if self.quiet {
            return log::LevelFilter::Error;
        }
        match self.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    }

    /// The file configuration with `--set` overrides, then typed flags.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

/// Runs one command; the caller maps errors to exit codes.
pub fn run(cli: &Cli) -> CliResult<()> {
    if cli.command == Command::Synth {
        let dir = cli.out.clone().ok_or_else(|| CliError::Usage("synth needs --out DIR".into()))?;
        return commands::synth(&dir, cli.seed.unwrap_or(0));
    }
    let cfg = cli.run_config()?;
    // A second build in the same process (tests) keeps the existing pool.
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
        log::debug!("thread pool already initialised: {e}");
    }
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Stats => commands::stats(&cfg),
        Command::FilterWeb => commands::filter_web(&cfg),
        Command::Train => commands::train_model(&cfg),
        Command::Infer => commands::infer(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Report => commands::report(&cfg),
        Command::Pipeline => commands::pipeline(&cfg),
        Command::Synth => unreachable!("handled above"),
    }
}
