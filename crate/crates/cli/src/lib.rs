//! Front end for the pc-core solvers: k-sat and NK runs, instance
//! generation and the two-agent landscape demo.

pub mod commands;
pub mod config;
pub mod landscape;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error class mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_SOLVED: u8 = 0;
pub const EXIT_NOT_SOLVED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Environment variable that overrides `--seed` when set.
pub const SEED_ENV: &str = "PC_SEED";

#[derive(Debug, Parser)]
#[command(name = "pc", version, about = "Probability Collectives solvers")]
pub struct Cli {
    /// Worker threads for solver-internal parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat TOML file whose keys mirror the long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a k-sat instance from a DIMACS file or a planted generator.
    SolveKsat(SolveKsatArgs),
    /// Minimize a random NK landscape.
    SolveNk(SolveNkArgs),
    /// Write a generated instance.
    #[command(subcommand)]
    Generate(GenerateCommand),
    /// Emit the Lagrangian grid of a two-agent demo.
    Landscape(LandscapeArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// Number of mixture components; 1 runs the single-product solver.
    #[arg(long)]
    pub mixtures: Option<usize>,
    /// Inner update rule: brouwer, newton or gradient.
    #[arg(long)]
    pub update: Option<String>,
    /// Agent schedule for the single-product solver: serial, parallel or independent.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Inertia in [0, 1) applied to parallel updates.
    #[arg(long)]
    pub inertia: Option<f64>,
    /// Initial temperature.
    #[arg(long)]
    pub temp: Option<f64>,
    /// Stop once the effective temperature falls below this.
    #[arg(long = "min-temp")]
    pub min_temp: Option<f64>,
    /// Solver seed; also seeds a generated NK instance.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on inner iterations over the whole run.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Trace destination; `-` writes to standard output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Append wall-clock milliseconds to each trace record.
    #[arg(long = "trace-timing")]
    pub trace_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolveKsatArgs {
    /// DIMACS CNF file.
    #[arg(conflicts_with = "planted")]
    pub path: Option<PathBuf>,
    /// Planted instance instead of a file.
    #[arg(long, num_args = 4, value_names = ["N", "C", "K", "SEED"])]
    pub planted: Option<Vec<u64>>,
    /// Multiplier step size.
    #[arg(long = "alpha-lambda")]
    pub alpha_lambda: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SolveNkArgs {
    /// Number of sites.
    #[arg(long, required_unless_present = "instance")]
    pub n: Option<usize>,
    /// Neighbors per site.
    #[arg(long, required_unless_present = "instance")]
    pub k: Option<usize>,
    /// NK text file instead of generating from (n, k, seed).
    #[arg(long, conflicts_with_all = ["n", "k"])]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Planted k-sat instance in DIMACS CNF.
    Ksat {
        /// Number of variables.
        #[arg(long)]
        n: usize,
        /// Number of clauses.
        #[arg(long)]
        c: usize,
        /// Literals per clause.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// NK landscape in the `nk N K seed` text format.
    Nk {
        /// Number of sites.
        #[arg(long)]
        n: usize,
        /// Neighbors per site.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Paper2x2,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    #[arg(long, value_enum, default_value = "paper2x2")]
    pub demo: Demo,
    /// Points per side.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line, writing the report to `out`. Returns the
/// process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<u8> {
    let file = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => file.usize("threads")?,
    };
    if let Some(t) = threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let seed_env = std::env::var(SEED_ENV).ok();
    match &cli.command {
        Command::SolveKsat(args) => commands::solve_ksat(args, &file, seed_env.as_deref(), out),
        Command::SolveNk(args) => commands::solve_nk(args, &file, seed_env.as_deref(), out),
        Command::Generate(g) => commands::generate(g, out),
        Command::Landscape(args) => commands::landscape(args, out),
    }
}

/// Exit code for an error: usage and parse problems map to 2, everything
/// else to 1.
pub fn error_exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<pc_core::PcError>(),
                Some(pc_core::PcError::Parse { .. })
            )
    });
    if usage {
        EXIT_USAGE
    } else {
        EXIT_NOT_SOLVED
    }
}
