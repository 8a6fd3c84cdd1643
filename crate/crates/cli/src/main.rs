//! `kdd`: sampling-pattern design from differential distributions.

mod commands;
mod config;
mod failure;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kdd_core::{CoilProfile, TieBreak};

use crate::config::Algorithm;
use crate::failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "kdd", version, about = "k-space sampling design by differential distributions")]
struct Cli {
    /// Manifest path; defaults to `<primary output>.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Shape {
    Full,
    Cross,
    Ellipse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    Gaussian,
    Birdcage,
}

impl From<Profile> for CoilProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Gaussian => CoilProfile::Gaussian,
            Profile::Birdcage => CoilProfile::BirdcageLike,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Tie {
    Lexicographic,
    Random,
}

impl From<Tie> for TieBreak {
    fn from(t: Tie) -> Self {
        match t {
            Tie::Lexicographic => TieBreak::Lexicographic,
            Tie::Random => TieBreak::Random,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Spatial grid, e.g. `64,64`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Number of coils; 0 gives the support indicator model.
    #[arg(long, default_value_t = 8)]
    coils: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    profile: Profile,
    #[arg(long, value_enum)]
    support: Option<Shape>,
    /// Ellipse semi-axes as fractions of the grid.
    #[arg(long, value_delimiter = ',', default_values_t = [0.45, 0.35])]
    semi: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    angle: f64,
    /// Frames of a B-spline temporal model.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, requires = "frames")]
    coeffs: Option<usize>,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long)]
    periodic: bool,
    #[arg(long)]
    readout_axis: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComputeWArgs {
    #[arg(long)]
    sens: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep the readout axis instead of summing over it.
    #[arg(long)]
    keep_readout: bool,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    w: PathBuf,
    /// Total number of samples.
    #[arg(long)]
    n: usize,
    /// Per-frame quota as `t:count`; repeat for every frame.
    #[arg(long = "quota")]
    quotas: Vec<String>,
    /// Largest entries of `w` kept by the approximate algorithm.
    #[arg(long)]
    sparse_keep: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "lexicographic")]
    tie_break: Tie,
    #[arg(long)]
    no_repeats: bool,
    #[arg(long)]
    out: PathBuf,
    /// Final ΔJ map as PGM, frames stacked along the first axis.
    #[arg(long)]
    delta_j: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Exact,
    Approx,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Exact => Algorithm::Exact,
            AlgoArg::Approx => Algorithm::Approx,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    pattern: PathBuf,
    /// Adds the first moment and the variance bound.
    #[arg(long)]
    sens: Option<PathBuf>,
    /// Fails with the consistency exit code unless `tr((EᴴE)²)` matches.
    #[arg(long)]
    expect: Option<f64>,
    /// JSON results file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GFactorArgs {
    #[arg(long)]
    sens: PathBuf,
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Exact noise covariance instead of pseudo replicas.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Display window `lo,hi` of the PGM.
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CaipiArgs {
    /// Acceleration; every `R×R` lattice with `R` samples is scored.
    #[arg(long = "R")]
    r: usize,
    #[arg(long, required_unless_present = "sens")]
    w: Option<PathBuf>,
    /// Computes `w` from sensitivities instead of reading it.
    #[arg(long, conflicts_with = "w")]
    sens: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    sens: PathBuf,
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-cell ΔJ and P² table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    sens: PathBuf,
    /// `label=path`, repeated.
    #[arg(long = "pattern", required = true)]
    patterns: Vec<String>,
    /// Label the normalized columns are relative to; the first by default.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    noise: f64,
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sensitivity model.
    Synth(SynthArgs),
    /// Weighting function of a sensitivity model.
    ComputeW(ComputeWArgs),
    /// Greedy best-candidate sampling design.
    Design(DesignArgs),
    /// Second moment of a pattern.
    Evaluate(EvaluateArgs),
    /// g-factor map of a pattern.
    Gfactor(GFactorArgs),
    /// Rank periodic lattices by the second moment.
    Caipi(CaipiArgs),
    /// Power function of kernel interpolation next to ΔJ.
    Power(PowerArgs),
    /// Compare patterns in one table.
    Report(ReportArgs),
    /// Full experiment from a JSON configuration.
    Run(RunArgs),
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("KDD_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("KDD_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::config(e.to_string()))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let manifest = cli.manifest.as_deref();
    match cli.command {
        Command::Synth(a) => commands::synth(&a, manifest),
        Command::ComputeW(a) => commands::compute_w(&a, manifest),
        Command::Design(a) => commands::design(&a, manifest),
        Command::Evaluate(a) => commands::evaluate(&a, manifest),
        Command::Gfactor(a) => commands::gfactor(&a, manifest),
        Command::Caipi(a) => commands::caipi(&a, manifest),
        Command::Power(a) => commands::power(&a, manifest),
        Command::Report(a) => commands::report(&a, manifest),
        Command::Run(a) => commands::run(&a, manifest),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kdd: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}
