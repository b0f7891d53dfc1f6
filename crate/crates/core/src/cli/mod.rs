//! Batch experiment driver.
//!
//! Every command is driven by one JSON [`ExperimentConfig`], optionally
//! starting from a named preset, and writes plain CSV/JSON artifacts plus a
//! `manifest.json` with the resolved config, all seeds and input hashes.
//!
//! Exit codes: 0 on success, 1 on usage, config, data or I/O errors, 2 when
//! some training jobs failed but the command finished.

mod commands;
mod config;
mod presets;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_eval, cmd_fit, cmd_simulate, cmd_sweep, EvalArgs, Outcome};
pub use config::{
    merge, DatasetBlock, EvalBlock, ExperimentConfig, Overrides, RunBlock, SweepBlock, DEFAULT_GRID_POINTS,
};
pub use presets::{preset, PRESET_NAMES};

use crate::error::Result;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "srugc", version, about = "Granger-causal network inference with SRU/eSRU predictors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (JSON); layered over --preset when both are given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset, e.g. lorenz_f10_esru.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides run.workers).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run seed; also replaces the generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let overrides = Overrides { out_dir: self.out.clone(), workers: self.workers, seed: self.seed };
        ExperimentConfig::load(self.preset.as_deref(), self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset with its ground truth.
    Simulate(RunArgs),
    /// Fit every component at the configured lambda1.
    Fit(RunArgs),
    /// Sweep lambda1 and score the graphs against the truth.
    Sweep(RunArgs),
    /// Score a score matrix or sweep directory against a truth graph.
    Eval {
        /// Score/adjacency CSV or sweep directory.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Ignore diagonal (self) pairs.
        #[arg(long)]
        exclude_self: bool,
        /// Omit the (0,0) and (1,1) end points of sweep curves.
        #[arg(long)]
        no_anchors: bool,
        /// Truth file uses the "row causes column" convention.
        #[arg(long)]
        transpose_truth: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&a.load()?),
        Command::Fit(a) => cmd_fit(&a.load()?),
        Command::Sweep(a) => cmd_sweep(&a.load()?),
        Command::Eval { pred, truth, exclude_self, no_anchors, transpose_truth, out } => cmd_eval(&EvalArgs {
            pred: pred.clone(),
            truth: truth.clone(),
            exclude_self: *exclude_self,
            anchors: !no_anchors,
            transpose_truth: *transpose_truth,
            out_dir: out.clone(),
        }),
        Command::Presets => Ok(Outcome { failures: 0, summary: PRESET_NAMES.join("\n") }),
    }
}

/// Parses `args`, runs the command, prints its summary and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.failures > 0 {
                EXIT_PARTIAL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
