//! `trace-contam`: analyze clean/perturbed trace pairs, aggregate corpora,
//! perturb artifacts and generate synthetic corpora.
//!
//! Exit codes: 0 success, 2 usage, 3 unreadable or malformed input,
//! 4 analysis failure, 5 batch finished with some pairs failing.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::AnalysisArgs;

#[derive(Debug, Parser)]
#[command(name = "trace-contam", version, about = "Contamination-cascade analysis for multi-agent workflow traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one clean/perturbed pair and emit a pair record.
    Analyze {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        perturbed: PathBuf,
        /// Write the record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Analyze every task directory of a corpus and write aggregate reports.
    Batch {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Apply one catalog operator to a table (.csv) or document artifact.
    Perturb {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        op: String,
        #[arg(long)]
        seed: u64,
        /// Operator parameter as name=value; repeatable.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Trace artifact id that carries this content; repeatable.
        #[arg(long = "affected-id", value_name = "ID")]
        affected_ids: Vec<String>,
        /// Perturbed artifact path (default: next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record sidecar path (default: `<out>.record.json`).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Generate a labeled synthetic corpus.
    Gen {
        /// Pairs per scenario.
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a trace and check its structural rules.
    Validate {
        #[arg(long)]
        trace: PathBuf,
    },
    /// List the perturbation operators and their default parameters.
    Catalog,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { clean, perturbed, out, analysis } => {
            commands::analyze(&clean, &perturbed, out.as_deref(), &analysis)
        }
        Command::Batch { corpus, out, analysis } => commands::batch(&corpus, &out, &analysis),
        Command::Perturb { artifact, op, seed, params, affected_ids, out, record } => commands::perturb(
            commands::PerturbRequest { artifact, op, seed, params, affected_ids, out, record },
        ),
        Command::Gen { count, seed, out } => commands::generate(count, seed, &out),
        Command::Validate { trace } => commands::validate(&trace),
        Command::Catalog => commands::list_catalog(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trace-contam: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
