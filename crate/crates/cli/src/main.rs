//! `clustertdp` command line tool.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "clustertdp", version, about = "TDP bounds for cluster-extent inference")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Table of f(d,k), r_k and the max-TDP ratio.
    RkTable(RkTableArgs),
    /// Permutation calibration of z for a given k, or k for a given z.
    Calibrate(CalibrateArgs),
    /// Cluster and region TDP report for a z-map.
    Analyze(AnalyzeArgs),
    /// Heuristic separator against the known optimum on hyperrectangles.
    BenchSeparator(BenchArgs),
    /// Error-rate simulation on smoothed 2D fields.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, serde::Serialize)]
pub struct OutArg {
    /// Write to this file (a `<out>.manifest.json` is written next to it).
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct RkTableArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub kmax: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug, serde::Serialize)]
#[group(id = "thr", required = true, multiple = false, args = ["k", "z"])]
pub struct ThresholdArgs {
    /// Cluster-extent threshold k_M (find z).
    #[arg(long)]
    pub k: Option<usize>,
    /// Cluster-forming threshold z (find k_M).
    #[arg(long, allow_negative_numbers = true)]
    pub z: Option<f64>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub perms: std::path::PathBuf,
    #[arg(long)]
    pub mask: std::path::PathBuf,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Lower,
    Heuristic,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideArg {
    One,
    Abs,
    Split,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct AnalyzeArgs {
    /// z-map volume (f32).
    #[arg(long)]
    pub zmap: std::path::PathBuf,
    /// Analysis mask (u8 or u16; default: the whole grid).
    #[arg(long)]
    pub mask: Option<std::path::PathBuf>,
    /// Label volume (u8 or u16).
    #[arg(long)]
    pub atlas: Option<std::path::PathBuf>,
    /// JSON region list.
    #[arg(long)]
    pub regions: Option<std::path::PathBuf>,
    /// Permutation matrix; row 0 is the observed data.
    #[arg(long)]
    pub perms: std::path::PathBuf,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = SolverArg::Both)]
    pub solver: SolverArg,
    #[arg(long, value_enum, default_value_t = SideArg::One)]
    pub sidedness: SideArg,
    /// Skip the upper bound.
    #[arg(long)]
    pub no_upper: bool,
    /// Phase-1 restarts of the separator heuristic.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Wall-clock budget per heuristic call (makes results timing dependent).
    #[arg(long)]
    pub time_limit_ms: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub nmax: usize,
    #[arg(long, default_value_t = 4)]
    pub cmax: usize,
    #[arg(long, default_value_t = 2000)]
    pub budget_ms: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct SimulateArgs {
    /// Simulation plan (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: std::path::PathBuf,
    /// Write here instead of the recorded output path.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

pub fn run(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        // A replay reaches here with the pool already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let outcome = std::panic::catch_unwind(|| commands::dispatch(&cli, &argv));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(f)) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::Internal(e) => eprintln!("internal error: {e:#}"),
            }
            f.code()
        }
        Err(_) => 3,
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args().collect()))
}
