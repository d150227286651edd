//! `mtselect` — run online translation-system selection experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mtselect",
    version,
    about = "Online translation-system selection as a bandit problem",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score hypothesis files against a reference into a score dataset
    Score(ScoreArgs),
    /// Generate the synthetic dataset described by a config's [synth] block
    Synth(SynthArgs),
    /// Run one policy once and write its log, summary, and heatmap
    Run(RunArgs),
    /// Run every configured policy over every seed and aggregate
    Sweep(SweepArgs),
    /// Turn run logs into regret-curve and heatmap CSVs
    Report(ReportArgs),
}

#[derive(Args)]
pub struct ScoreArgs {
    /// Tokenized reference file, one sentence per line
    #[arg(long)]
    pub refs: PathBuf,

    /// Hypothesis file as NAME=PATH; repeat once per system
    #[arg(long = "hyp", value_name = "NAME=PATH", required = true, value_parser = parse_hyp)]
    pub hyps: Vec<(String, PathBuf)>,

    /// Output dataset file (JSON lines)
    #[arg(long)]
    pub out: PathBuf,

    /// Tokenized source file; reference text doubles as the source if absent
    #[arg(long)]
    pub source: Option<PathBuf>,

    /// Domain label stamped on every record
    #[arg(long, default_value = "default")]
    pub domain: String,

    /// Record ids become PREFIX-<line>
    #[arg(long, default_value = "sent")]
    pub id_prefix: String,

    /// Drop per-arm hypothesis tokens from the records
    #[arg(long)]
    pub no_hyps: bool,
}

fn parse_hyp(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected NAME=PATH, got `{s}`")),
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// Experiment config (TOML) with a [synth] section
    #[arg(long)]
    pub config: PathBuf,

    /// Output dataset file (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    pub config: PathBuf,

    /// Policy to run: a [[policies]] name or a policy kind
    #[arg(long)]
    pub policy: Option<String>,

    /// Master seed; defaults to the first entry of `seeds`
    #[arg(long)]
    pub seed: Option<u64>,

    /// Feedback style override: scale, granular, variance, or skew
    #[arg(long)]
    pub feedback: Option<String>,

    /// Stop after this many steps
    #[arg(long)]
    pub t_cap: Option<u64>,

    /// Output directory; overrides the config's `output_dir`
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Heatmap window size, in steps
    #[arg(long, default_value_t = 100)]
    pub interval: u64,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    pub config: PathBuf,

    /// Output directory; overrides the config's `output_dir`
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Heatmap window size, in steps
    #[arg(long, default_value_t = 100)]
    pub interval: u64,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run log to read (JSON lines); repeatable
    #[arg(long = "log", required = true)]
    pub logs: Vec<PathBuf>,

    /// Directory for the CSV outputs
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Regret/heatmap window size, in steps
    #[arg(long, default_value_t = 100)]
    pub interval: u64,

    /// Comma-separated arm names for heatmap rows; inferred if absent
    #[arg(long, value_delimiter = ',')]
    pub arms: Option<Vec<String>>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match &cli.command {
        Command::Score(args) => commands::cmd_score(args),
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Run(args) => commands::cmd_run(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Report(args) => commands::cmd_report(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(2);
    }
}
