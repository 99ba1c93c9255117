//! Manifestation taxonomy and per-pair analysis.
//!
//! Each clean/perturbed pair lands in one cell of a two-by-two grid: did the
//! control flow diverge, and did the task outcome change?

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlflow::{classify_patterns, diagnostics_with, ControlFlowConfig, ControlFlowDiagnostics, Pattern};
use crate::divergence::{align, DivergenceError, DivergenceReport, FirstKind, TimeBase, DEFAULT_CELL_BUDGET};
use crate::perturb::Modality;
use crate::provenance::ProvenanceGraph;
use crate::signature::{signature_sequence_with, SignatureConfig};
use crate::trace::{ArtifactId, Trace};

/// Version of the serialized [`PairAnalysis`] record.
pub const PAIR_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ManifestationLabel {
    #[serde(rename = "silent")]
    SilentSemanticCorruption,
    #[serde(rename = "detour_recovery")]
    BehavioralDetourWithRecovery,
    #[serde(rename = "combined")]
    CombinedDisruption,
    #[serde(rename = "no_effect")]
    NoEffect,
}

impl ManifestationLabel {
    pub const ALL: [ManifestationLabel; 4] = [
        ManifestationLabel::NoEffect,
        ManifestationLabel::SilentSemanticCorruption,
        ManifestationLabel::BehavioralDetourWithRecovery,
        ManifestationLabel::CombinedDisruption,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ManifestationLabel::SilentSemanticCorruption => "silent",
            ManifestationLabel::BehavioralDetourWithRecovery => "detour_recovery",
            ManifestationLabel::CombinedDisruption => "combined",
            ManifestationLabel::NoEffect => "no_effect",
        }
    }

    pub fn from_grid(diverged: bool, outcome_changed: bool) -> Self {
        match (diverged, outcome_changed) {
            (false, false) => ManifestationLabel::NoEffect,
            (false, true) => ManifestationLabel::SilentSemanticCorruption,
            (true, false) => ManifestationLabel::BehavioralDetourWithRecovery,
            (true, true) => ManifestationLabel::CombinedDisruption,
        }
    }

    /// Labels whose runs diverged structurally.
    pub fn is_divergent(self) -> bool {
        matches!(self, ManifestationLabel::BehavioralDetourWithRecovery | ManifestationLabel::CombinedDisruption)
    }
}

impl fmt::Display for ManifestationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingBucket {
    Early,
    Mid,
    Late,
    NoDivergence,
}

impl TimingBucket {
    pub const ALL: [TimingBucket; 4] = [TimingBucket::Early, TimingBucket::Mid, TimingBucket::Late, TimingBucket::NoDivergence];

    pub fn of(first_kind: FirstKind, t_star_norm: Option<f64>) -> Self {
        match (first_kind, t_star_norm) {
            (FirstKind::None, _) | (_, None) => TimingBucket::NoDivergence,
            (_, Some(t)) if t < 0.1 => TimingBucket::Early,
            (_, Some(t)) if t > 0.3 => TimingBucket::Late,
            _ => TimingBucket::Mid,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            TimingBucket::Early => "early",
            TimingBucket::Mid => "mid",
            TimingBucket::Late => "late",
            TimingBucket::NoDivergence => "no_divergence",
        }
    }
}

/// How two final answers are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum AnswerComparator {
    Exact,
    /// Trim, case-fold, collapse internal whitespace.
    #[default]
    Normalized,
    /// Normalized text, but answers that both parse as decimals compare within `tolerance`.
    Numeric { tolerance: f64 },
}


impl AnswerComparator {
    pub const DEFAULT_NUMERIC_TOLERANCE: f64 = 1e-9;

    pub fn equal(&self, a: &str, b: &str) -> bool {
        match self {
            AnswerComparator::Exact => a == b,
            AnswerComparator::Normalized => normalize_answer(a) == normalize_answer(b),
            AnswerComparator::Numeric { tolerance } => {
                let (na, nb) = (normalize_answer(a), normalize_answer(b));
                match (na.parse::<f64>(), nb.parse::<f64>()) {
                    (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => (x - y).abs() <= *tolerance,
                    _ => na == nb,
                }
            }
        }
    }
}

pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Whether the perturbed run's final answer differs from the clean one.
///
/// A lost outcome counts as a change; an outcome appearing where the clean run
/// had none also counts; two missing outcomes do not.
pub fn outcome_changed(clean: &Trace, perturbed: &Trace, comparator: &AnswerComparator) -> bool {
    match (clean.answer(), perturbed.answer()) {
        (Some(a), Some(b)) => !comparator.equal(a, b),
        (None, None) => false,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("d_norm {0} outside [0, 1]")]
    DNorm(f64),
    #[error("epsilon {0} outside [0, 1)")]
    Epsilon(f64),
}

/// Structural divergence means `d_norm > epsilon`.
pub fn classify_manifestation(
    d_norm: f64,
    outcome_changed: bool,
    epsilon: f64,
) -> Result<ManifestationLabel, DomainError> {
    if !(0.0..=1.0).contains(&d_norm) {
        return Err(DomainError::DNorm(d_norm));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(DomainError::Epsilon(epsilon));
    }
    Ok(ManifestationLabel::from_grid(d_norm > epsilon, outcome_changed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadWarning {
    /// Clean run logged no tokens; ratio undefined.
    CleanTotalZero,
    /// Some event carried an unknown (zero) token count.
    UnknownCounts,
    /// Perturbed run logged no events; ratio reported as 0.
    EmptyPerturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenOverhead {
    pub ratio: Option<f64>,
    pub warning: Option<OverheadWarning>,
}

/// Perturbed tokens over clean tokens.
pub fn token_overhead(clean: &Trace, perturbed: &Trace) -> TokenOverhead {
    let clean_total = clean.total_tokens();
    if clean_total == 0 {
        return TokenOverhead { ratio: None, warning: Some(OverheadWarning::CleanTotalZero) };
    }
    if perturbed.is_empty() {
        return TokenOverhead { ratio: Some(0.0), warning: Some(OverheadWarning::EmptyPerturbed) };
    }
    if clean.has_unknown_token_counts() || perturbed.has_unknown_token_counts() {
        return TokenOverhead { ratio: None, warning: Some(OverheadWarning::UnknownCounts) };
    }
    TokenOverhead { ratio: Some(perturbed.total_tokens() as f64 / clean_total as f64), warning: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub epsilon: f64,
    pub comparator: AnswerComparator,
    pub time_base: TimeBase,
    pub cell_budget: u64,
    pub signatures: SignatureConfig,
    pub controlflow: ControlFlowConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            epsilon: 0.05,
            comparator: AnswerComparator::Normalized,
            time_base: TimeBase::Clean,
            cell_budget: DEFAULT_CELL_BUDGET,
            signatures: SignatureConfig::default(),
            controlflow: ControlFlowConfig::default(),
        }
    }
}

/// Provenance view of the perturbed run, when its perturbation record names affected artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceSummary {
    pub seeds: Vec<ArtifactId>,
    pub unknown_seeds: Vec<ArtifactId>,
    pub scope_size: usize,
    pub outcome_contaminated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAnalysis {
    pub schema_version: u32,
    pub task_id: String,
    pub op_name: Option<String>,
    pub modality: Option<Modality>,
    pub clean_events: usize,
    pub perturbed_events: usize,
    pub divergence: DivergenceReport,
    pub diagnostics: ControlFlowDiagnostics,
    pub patterns: BTreeSet<Pattern>,
    pub label: ManifestationLabel,
    pub outcome_changed: bool,
    pub recovered: bool,
    pub token_overhead: Option<f64>,
    pub overhead_warning: Option<OverheadWarning>,
    pub timing_bucket: TimingBucket,
    pub provenance: Option<ProvenanceSummary>,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("task id mismatch: clean `{clean}` vs perturbed `{perturbed}`")]
    TaskMismatch { clean: String, perturbed: String },
    #[error(transparent)]
    SequenceTooLong(#[from] DivergenceError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Full analysis of one clean/perturbed pair.
pub fn analyze_pair(clean: &Trace, perturbed: &Trace, config: &AnalysisConfig) -> Result<PairAnalysis, AnalysisError> {
    if clean.meta.task_id != perturbed.meta.task_id {
        return Err(AnalysisError::TaskMismatch {
            clean: clean.meta.task_id.clone(),
            perturbed: perturbed.meta.task_id.clone(),
        });
    }

    let a = signature_sequence_with(clean, config.signatures);
    let b = signature_sequence_with(perturbed, config.signatures);
    let alignment = align(&a, &b, config.cell_budget)?;
    let divergence = DivergenceReport::from_alignment(&alignment, &a, &b, config.time_base);
    let diagnostics = diagnostics_with(clean, perturbed, &alignment, config.signatures, &config.controlflow)
        .expect("alignment was computed over these signature sequences");
    let patterns = classify_patterns(&diagnostics);

    let changed = outcome_changed(clean, perturbed, &config.comparator);
    let label = classify_manifestation(divergence.d_norm, changed, config.epsilon)?;
    let overhead = token_overhead(clean, perturbed);
    let timing_bucket = TimingBucket::of(divergence.first_kind, divergence.t_star_norm);

    let record = perturbed.meta.perturbation.as_ref();
    let provenance = record.filter(|r| !r.affected_ids.is_empty()).map(|r| {
        let graph = ProvenanceGraph::collect(perturbed);
        let seeds: BTreeSet<ArtifactId> = r.affected_ids.iter().map(|s| ArtifactId::new(s.as_str())).collect();
        let scope = graph.contamination_scope(&seeds);
        ProvenanceSummary {
            seeds: seeds.iter().cloned().collect(),
            unknown_seeds: scope.unknown.clone(),
            scope_size: scope.reached.len(),
            outcome_contaminated: graph.outcome_contaminated_by(perturbed, &scope.reached),
        }
    });

    Ok(PairAnalysis {
        schema_version: PAIR_SCHEMA_VERSION,
        task_id: clean.meta.task_id.clone(),
        op_name: record.map(|r| r.op_name.clone()),
        modality: record.map(|r| r.modality),
        clean_events: clean.len(),
        perturbed_events: perturbed.len(),
        divergence,
        diagnostics,
        patterns,
        label,
        outcome_changed: changed,
        recovered: !changed,
        token_overhead: overhead.ratio,
        overhead_warning: overhead.warning,
        timing_bucket,
        provenance,
    })
}
