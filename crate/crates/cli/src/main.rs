//! `wstack` command-line entry point.

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout().lock(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use wstack::bench::{BenchError, Scale};
use wstack::metrics::{MetricsError, ReportKind};
use wstack::pipeline::PipelineError;
use wstack::transform::TransformError;
use wstack::visdata::VisError;

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Usage(String),
    /// File system failure (exit 3).
    Io(String),
    /// Verification failure or pipeline error (exit 1).
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Failed(m) => m,
        }
    }

    pub fn from_vis(e: VisError) -> Self {
        match e {
            VisError::Io { .. } | VisError::Stream(_) => CliError::Io(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }

    pub fn from_metrics(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { .. } | MetricsError::Counter(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }

    pub fn from_pipeline(e: PipelineError) -> Self {
        match e {
            PipelineError::Vis(v) => Self::from_vis(v),
            PipelineError::Transform(t @ TransformError::Io { .. }) => CliError::Io(t.to_string()),
            PipelineError::Config(_) | PipelineError::Mesh(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }

    pub fn from_bench(e: BenchError) -> Self {
        match e {
            BenchError::Plan(_) | BenchError::DatasetNotFound(_) => CliError::Usage(e.to_string()),
            BenchError::Io { .. } => CliError::Io(e.to_string()),
            BenchError::Vis(v) => Self::from_vis(v),
            BenchError::Metrics(m) => Self::from_metrics(m),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "wstack", version, about = "w-stacking imager with distributed reductions and energy reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key (repeatable), e.g. `--set grid.n_u=512`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic point-source dataset.
    Gen {
        /// Sources as `l,m,flux[;l,m,flux...]` (gen.sources).
        #[arg(long)]
        sources: Option<String>,
        /// Number of records (gen.records).
        #[arg(long)]
        records: Option<String>,
        /// Generator seed (run.seed).
        #[arg(long)]
        seed: Option<String>,
        /// Output dataset (gen.output).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Image a dataset through the full pipeline.
    Image {
        /// Input dataset (run.dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Topology `NxR` or `NxRxT`.
        #[arg(long)]
        topo: Option<String>,
        /// Gridding threads per rank (topo.threads_per_rank).
        #[arg(long)]
        threads: Option<String>,
        /// Output directory (run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a benchmark sweep with repeats.
    Bench {
        /// Input dataset (run.dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Repeats per configuration (bench.repeats).
        #[arg(long)]
        repeats: Option<String>,
        /// Output directory (run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Report on trace or run CSVs.
    Report {
        /// gp | reduce_fraction | freq | ratios | scaling_gp
        kind: ReportKind,
        /// Trace CSV files, concatenated.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Green productivity weight (run.alpha).
        #[arg(long)]
        alpha: Option<String>,
        /// Reference run label for gp (report.reference).
        #[arg(long)]
        reference: Option<String>,
        /// Report CSV path; default `<run.out_dir>/report_<kind>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the oracle self-check suite.
    Verify {
        /// small | medium
        scale: Scale,
        /// Read this dataset in the read check.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Add a check that always fails.
        #[arg(long, hide = true)]
        force_fail: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration in file format.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let keys = config::keys_help();
    let cmd = Cli::command()
        .after_help(keys.clone())
        .mut_subcommands(|s| s.after_help(keys.clone()));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
