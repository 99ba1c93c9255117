use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_ANALYSIS: i32 = 4;
pub const EXIT_PARTIAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Analysis(String),
    #[error("{failed} of {total} pairs failed; see the errors section of the report")]
    PartialBatch { failed: usize, total: usize },
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Analysis(_) => EXIT_ANALYSIS,
            CliError::PartialBatch { .. } => EXIT_PARTIAL,
            // Unwritable outputs are an environment problem, reported like bad input.
            CliError::Output { .. } => EXIT_PARSE,
        }
    }
}
