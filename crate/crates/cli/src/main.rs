//! `blocklru` experiment command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "blocklru", version, about = "Block-diagonal and higher-order linear recurrent units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config with [task], [model], [train], [sweep], [bench], [spectrum], [flops] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Root seed; overrides the task seed and the run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/test dataset files and a manifest.
    Gen,
    /// Train one model; writes report.json and the best checkpoint.
    Train {
        /// Dataset directory from `gen`; generated from [task] when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Learning-rate × seed sweep over the [sweep] configurations.
    Sweep {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Time the sequential and Blelloch executors.
    ScanBench,
    /// Eigenvalue spectra of a model's transition blocks on probe inputs.
    Spectrum {
        /// Checkpoint to analyse; an untrained model from [model] when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// FLOPs per recurrent step from the cost table.
    Flops {
        #[arg(long)]
        arch: Option<String>,
        /// Formula symbol, e.g. `h=128`; repeatable.
        #[arg(long = "sym", value_parser = parse_symbol)]
        symbols: Vec<(String, u64)>,
    },
}

fn parse_symbol(s: &str) -> Result<(String, u64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v = v.parse().map_err(|_| format!("{k}: {v:?} is not a non-negative integer"))?;
    Ok((k.trim().to_string(), v))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = cli.common;
    let result = match cli.command {
        Command::Gen => commands::gen(&common),
        Command::Train { data } => commands::train(&common, data.as_deref()),
        Command::Eval { checkpoint, data } => commands::eval(&common, &checkpoint, data.as_deref()),
        Command::Sweep { data } => commands::sweep(&common, data.as_deref()),
        Command::ScanBench => commands::scan_bench(&common),
        Command::Spectrum { checkpoint, data } => commands::spectrum(&common, checkpoint.as_deref(), data.as_deref()),
        Command::Flops { arch, symbols } => commands::flops(&common, arch, symbols),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
