//! Analysis of information-contamination cascades in multi-agent workflow
//! traces: structural divergence between clean and perturbed runs, control-flow
//! diagnostics, manifestation labels, provenance scoping, seeded artifact
//! perturbations and a deterministic pair simulator.

pub mod controlflow;
pub mod corpus;
pub mod digest;
pub mod divergence;
pub mod perturb;
pub mod provenance;
pub mod report;
pub mod signature;
pub mod sim;
pub mod stats;
pub mod taxonomy;
pub mod trace;

pub use controlflow::{classify_patterns, diagnostics, ControlFlowConfig, ControlFlowDiagnostics, LoopSpan, Pattern};
pub use divergence::{
    align, edit_distance, first_divergence, normalized_divergence, AlignOp, Alignment, DivergenceError,
    DivergenceReport, FirstDivergence, FirstKind, TimeBase,
};
pub use perturb::{
    apply_document, apply_tabular, catalog, Cell, DocumentArtifact, Modality, PerturbError, PerturbationRecord,
    TableArtifact,
};
pub use provenance::{ProvenanceError, ProvenanceGraph};
pub use report::{aggregate, AggregateReport};
pub use signature::{signature_of, signature_sequence, Signature, SignatureConfig};
pub use sim::{generate_corpus, generate_pair, GroundTruth, Scenario, ScenarioSpec};
pub use taxonomy::{
    analyze_pair, outcome_changed, token_overhead, AnalysisConfig, AnalysisError, AnswerComparator,
    ManifestationLabel, PairAnalysis, TimingBucket,
};
pub use trace::{
    parse_trace, serialize_trace, validate_trace, ArtifactId, Condition, Event, EventKind, Payload, Trace,
    TraceMeta, TraceParseError,
};
