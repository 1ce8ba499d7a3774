//! Command-line driver: urgency listings, simulation sweeps, comparisons,
//! and manifest summaries.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epsim_core::netsim::{DEFAULT_QUANTUM_BYTES, DEFAULT_SIGN_EPSILON, LinkModel};
use epsim_core::report::{
    cmd_compare, cmd_map, cmd_simulate, cmd_summarize, ExperimentConfig, ReportError,
    StrategyChoice,
};
use epsim_core::scheduler::SchedulerMode;

#[derive(Parser)]
#[command(
    name = "epsim",
    about = "Urgency-based web resource delivery simulator and report generator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-resource urgency assignment of a mapping strategy
    Map {
        #[arg(long)]
        manifest: PathBuf,
        /// Mapping strategy: dm, rtam, or sam
        #[arg(long, value_parser = parse_strategy)]
        strategy: StrategyChoice,
        /// Size threshold for sam (default: pooled script/image mean size)
        #[arg(long)]
        sam_threshold: Option<u64>,
        /// Also write the listing to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep of (strategy, mode) pairs and write traces and metrics
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated strategies: baseline, dm, rtam, sam
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy, default_value = "baseline,dm,rtam")]
        strategy: Vec<StrategyChoice>,
        /// Comma-separated modes: fifo, urgency, urgency-incremental
        #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "fifo,urgency")]
        mode: Vec<SchedulerMode>,
        #[command(flatten)]
        link: LinkArgs,
        /// Scheduling quantum in bytes
        #[arg(long, default_value_t = DEFAULT_QUANTUM_BYTES)]
        quantum: u64,
        /// Repetitions per (strategy, mode); repetition k runs with seed+k
        #[arg(long, default_value_t = 10)]
        reps: u32,
        #[arg(long)]
        sam_threshold: Option<u64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the sign matrix and relative-change table from metrics files
    Compare {
        /// Label of the baseline run (for example baseline_fifo)
        #[arg(long)]
        baseline: String,
        /// Relative changes within this fraction count as no change
        #[arg(long, default_value_t = DEFAULT_SIGN_EPSILON)]
        epsilon: f64,
        /// Directory for sign_matrix.txt and relative_changes.csv
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics files produced by the simulate subcommand
        #[arg(required = true)]
        metrics_files: Vec<PathBuf>,
    },
    /// Print and export the priority/type distribution of a manifest
    Summarize {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for priority_summary.csv and type_summary.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LinkArgs {
    /// Link bandwidth in bytes per second
    #[arg(long, default_value_t = 12_500_000.0)]
    bandwidth: f64,
    /// One-way delay in milliseconds
    #[arg(long)]
    delay_ms: Option<f64>,
    /// Per-quantum loss probability
    #[arg(long)]
    loss: Option<f64>,
    /// Base seed for the loss generator
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Preset for harsher conditions: 20 ms delay, 0.1 % loss
    #[arg(long)]
    challenging: bool,
}

impl LinkArgs {
    fn resolve(&self) -> LinkModel {
        let (delay_default, loss_default) = if self.challenging {
            (20.0, 0.001)
        } else {
            (10.0, 0.0005)
        };
        LinkModel {
            bandwidth_bytes_per_sec: self.bandwidth,
            one_way_delay_ms: self.delay_ms.unwrap_or(delay_default),
            loss_rate: self.loss.unwrap_or(loss_default),
            seed: self.seed,
        }
    }
}

fn parse_strategy(s: &str) -> Result<StrategyChoice, String> {
    StrategyChoice::from_label(s)
        .ok_or_else(|| format!("unknown strategy {s:?} (expected baseline, dm, rtam, or sam)"))
}

fn parse_mode(s: &str) -> Result<SchedulerMode, String> {
    SchedulerMode::from_label(s).ok_or_else(|| {
        format!("unknown mode {s:?} (expected fifo, urgency, or urgency-incremental)")
    })
}

fn run(cli: Cli) -> Result<(), ReportError> {
    match cli.command {
        Command::Map { manifest, strategy, sam_threshold, out } => {
            let csv = cmd_map(&manifest, strategy, sam_threshold, out.as_deref())?;
            print!("{csv}");
        }
        Command::Simulate {
            manifest,
            strategy,
            mode,
            link,
            quantum,
            reps,
            sam_threshold,
            out,
        } => {
            let config = ExperimentConfig {
                manifest_path: manifest,
                strategies: strategy,
                modes: mode,
                link: link.resolve(),
                quantum_bytes: quantum,
                repetitions: reps,
                sam_threshold_override: sam_threshold,
                output_dir: out,
            };
            let outcome = cmd_simulate(&config)?;
            print!("{}", outcome.medians_csv);
            eprintln!(
                "wrote {} runs; index at {}",
                outcome.run_count,
                outcome.index_path.display()
            );
        }
        Command::Compare { baseline, epsilon, out, metrics_files } => {
            let outcome = cmd_compare(&metrics_files, &baseline, epsilon, out.as_deref())?;
            print!("{}", outcome.matrix_text);
        }
        Command::Summarize { manifest, out } => {
            let text = cmd_summarize(&manifest, out.as_deref())?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
