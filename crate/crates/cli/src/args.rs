use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "utep", version, about = "Uncertainty-weighted adversarial domain adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one experiment and write metrics, summary and checkpoint.
    Run(RunArgs),
    /// Run the Cartesian product of config overrides.
    Sweep(SweepArgs),
    /// Check the transferability-bias bounds on random exact instances.
    VerifyTheory(TheoryArgs),
    /// Compare reverse-mode gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Write the configured dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-epoch uncertainty and pseudo-label CSVs.
    #[arg(long)]
    pub dump_uncertainty: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the base config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory holding one subdirectory per run and the aggregate CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of runs trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Cross the overrides with the seven component variants.
    #[arg(long)]
    pub ablation: bool,
    /// `key=v1,v2,...`; use `;` between values that contain commas.
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Deliberately break every check (exercises the failure path).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Config whose network and batch shapes the full objective uses.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed (and hence the data seed unless pinned).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving `dataset.csv`; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
