use std::path::Path;

use clap::{Args, ValueEnum};
use trace_contam_core::{AnalysisConfig, AnswerComparator, TimeBase};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComparatorMode {
    Exact,
    Normalized,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimeBaseArg {
    Clean,
    Perturbed,
    Aligned,
}

/// Analysis settings shared by `analyze` and `batch`. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// TOML file with analysis settings.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Structural divergence threshold on d_norm.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub comparator: Option<ComparatorMode>,
    /// Absolute tolerance for the numeric comparator.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Length that normalizes the first divergence point.
    #[arg(long, value_enum)]
    pub time_base: Option<TimeBaseArg>,
}

impl AnalysisArgs {
    pub fn resolve(&self) -> Result<AnalysisConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load(path)?,
            None => AnalysisConfig::default(),
        };
        if let Some(e) = self.epsilon {
            if !(0.0..1.0).contains(&e) {
                return Err(CliError::Usage(format!("--epsilon must be in [0, 1), got {e}")));
            }
            cfg.epsilon = e;
        }
        match (self.comparator, self.tolerance) {
            (Some(ComparatorMode::Exact), None) => cfg.comparator = AnswerComparator::Exact,
            (Some(ComparatorMode::Normalized), None) => cfg.comparator = AnswerComparator::Normalized,
            (Some(ComparatorMode::Numeric), t) => {
                cfg.comparator = AnswerComparator::Numeric { tolerance: t.unwrap_or(1e-9) };
            }
            (None, Some(t)) => match cfg.comparator {
                AnswerComparator::Numeric { .. } => cfg.comparator = AnswerComparator::Numeric { tolerance: t },
                _ => return Err(CliError::Usage("--tolerance needs --comparator numeric".into())),
            },
            (Some(_), Some(_)) => return Err(CliError::Usage("--tolerance needs --comparator numeric".into())),
            (None, None) => {}
        }
        if let Some(tb) = self.time_base {
            cfg.time_base = match tb {
                TimeBaseArg::Clean => TimeBase::Clean,
                TimeBaseArg::Perturbed => TimeBase::Perturbed,
                TimeBaseArg::Aligned => TimeBase::Aligned,
            };
        }
        Ok(cfg)
    }
}

fn load(path: &Path) -> Result<AnalysisConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
