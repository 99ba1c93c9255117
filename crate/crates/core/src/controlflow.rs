//! Control-flow diagnostics for a clean/perturbed pair and the recurring
//! divergence patterns built on them: rerouting, extended execution, looping
//! and early termination.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{AlignOp, Alignment};
use crate::signature::{signature_sequence_with, HaltClass, Signature, SignatureConfig};
use crate::trace::{Event, EventKind, Payload, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlFlowConfig {
    /// `|perturbed| / |clean|` at or above which execution counts as extended.
    pub extension_ratio: f64,
    /// `|perturbed| / |clean|` at or below which a deletion-suffixed run counts as truncated.
    pub truncation_ratio: f64,
    /// Inserted routing/tool events that alone mark extended execution.
    pub min_inserted_control_events: usize,
    /// Longest loop period searched for.
    pub max_loop_period: usize,
}

impl Default for ControlFlowConfig {
    fn default() -> Self {
        ControlFlowConfig {
            extension_ratio: 1.25,
            truncation_ratio: 0.8,
            min_inserted_control_events: 2,
            max_loop_period: 3,
        }
    }
}

/// A periodic block in the perturbed signature sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSpan {
    pub start: usize,
    pub period: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlFlowDiagnostics {
    pub reroute_count: usize,
    pub tool_calls_added: usize,
    pub tool_calls_removed: usize,
    pub introduced_failures: usize,
    pub retry_count: usize,
    pub loop_spans: Vec<LoopSpan>,
    pub early_terminated: bool,
    pub extended_execution: bool,
    pub length_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlFlowError {
    #[error("alignment does not replay the clean signature sequence into the perturbed one")]
    AlignmentMismatch,
}

/// Computes diagnostics from an alignment over the two traces' default signature sequences.
pub fn diagnostics(
    clean: &Trace,
    perturbed: &Trace,
    alignment: &Alignment,
) -> Result<ControlFlowDiagnostics, ControlFlowError> {
    diagnostics_with(clean, perturbed, alignment, SignatureConfig::default(), &ControlFlowConfig::default())
}

pub fn diagnostics_with(
    clean: &Trace,
    perturbed: &Trace,
    alignment: &Alignment,
    sig_config: SignatureConfig,
    config: &ControlFlowConfig,
) -> Result<ControlFlowDiagnostics, ControlFlowError> {
    let a = signature_sequence_with(clean, sig_config);
    let b = signature_sequence_with(perturbed, sig_config);
    if !alignment.is_consistent(&a, &b) {
        return Err(ControlFlowError::AlignmentMismatch);
    }
    // Alignment indices address signature positions; map them back to events.
    let a_events = signature_events(clean, sig_config);
    let b_events = signature_events(perturbed, sig_config);

    let mut d = ControlFlowDiagnostics::default();
    let mut inserted_control = 0usize;

    for op in &alignment.ops {
        match *op {
            AlignOp::Match(..) => {}
            AlignOp::Substitute(i, j) => {
                let (x, y) = (a_events[i], b_events[j]);
                if x.kind() == EventKind::RoutingDecision && y.kind() == EventKind::RoutingDecision {
                    d.reroute_count += 1;
                }
                if introduces_failure(Some(x), y) {
                    d.introduced_failures += 1;
                }
            }
            AlignOp::Insert(j) => {
                let y = b_events[j];
                match y.kind() {
                    EventKind::ToolInvocation => {
                        d.tool_calls_added += 1;
                        inserted_control += 1;
                    }
                    EventKind::RoutingDecision => inserted_control += 1,
                    _ => {}
                }
                if introduces_failure(None, y) {
                    d.introduced_failures += 1;
                }
            }
            AlignOp::Delete(i) => {
                if a_events[i].kind() == EventKind::ToolInvocation {
                    d.tool_calls_removed += 1;
                }
            }
        }
    }

    d.retry_count = consecutive_tool_repeats(&b_events).saturating_sub(consecutive_tool_repeats(&a_events));
    d.loop_spans = novel_loop_spans(&a, &b, config.max_loop_period);
    d.length_ratio = length_ratio(a.len(), b.len());

    let clean_has_outcome = clean.outcome().is_some();
    let lost_outcome = clean_has_outcome && perturbed.outcome().is_none();
    let halted_early = ends_in_early_halt(perturbed) && !ends_in_early_halt(clean);
    let deletion_suffix = matches!(alignment.ops.last(), Some(AlignOp::Delete(_)));
    d.early_terminated =
        lost_outcome || halted_early || (d.length_ratio <= config.truncation_ratio && deletion_suffix);

    // A run that halted is never also reported as extended.
    d.extended_execution = !d.early_terminated
        && (d.length_ratio >= config.extension_ratio || inserted_control >= config.min_inserted_control_events);

    Ok(d)
}

fn signature_events(trace: &Trace, config: SignatureConfig) -> Vec<&Event> {
    trace
        .events
        .iter()
        .filter(|e| config.include_retrieval || e.kind() != EventKind::RetrievalShown)
        .collect()
}

fn introduces_failure(clean: Option<&Event>, perturbed: &Event) -> bool {
    match (&perturbed.payload, clean.map(|e| &e.payload)) {
        (Payload::ToolFailure { .. }, Some(Payload::ToolFailure { .. })) => false,
        (Payload::ToolFailure { .. }, _) => true,
        (Payload::ToolInvocation { success: false, .. }, Some(Payload::ToolInvocation { success, .. })) => *success,
        (Payload::ToolInvocation { success: false, .. }, None) => true,
        _ => false,
    }
}

/// Adjacent pairs, within the subsequence of tool invocations, that repeat the
/// same tool and operation (success ignored).
fn consecutive_tool_repeats(events: &[&Event]) -> usize {
    let calls: Vec<(&str, &str)> = events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::ToolInvocation { tool_name, operation, .. } => Some((tool_name.as_str(), operation.as_str())),
            _ => None,
        })
        .collect();
    calls.windows(2).filter(|w| w[0] == w[1]).count()
}

fn ends_in_early_halt(trace: &Trace) -> bool {
    matches!(
        trace.events.last().map(|e| &e.payload),
        Some(Payload::AgentHalt { reason }) if HaltClass::of(reason) == HaltClass::EarlyStop
    )
}

fn length_ratio(clean: usize, perturbed: usize) -> f64 {
    match (clean, perturbed) {
        (0, 0) => 1.0,
        (0, p) => p as f64,
        (c, p) => p as f64 / c as f64,
    }
}

/// Maximal periodic blocks (period 1..=`max_period`, at least two repetitions),
/// scanning left to right. At each position the block covering the most events
/// wins, with the shorter period preferred on ties.
pub fn periodic_spans<T: PartialEq>(seq: &[T], max_period: usize) -> Vec<LoopSpan> {
    let mut spans = Vec::new();
    let mut start = 0;
    while start < seq.len() {
        let mut best: Option<LoopSpan> = None;
        for period in 1..=max_period {
            if start + 2 * period > seq.len() {
                break;
            }
            let unit = &seq[start..start + period];
            let mut reps = 1;
            while start + (reps + 1) * period <= seq.len()
                && &seq[start + reps * period..start + (reps + 1) * period] == unit
            {
                reps += 1;
            }
            let better = best.is_none_or(|b| period * reps > b.period * b.repetitions);
            if reps >= 2 && better {
                best = Some(LoopSpan { start, period, repetitions: reps });
            }
        }
        match best {
            Some(span) => {
                spans.push(span);
                start += span.period * span.repetitions;
            }
            None => start += 1,
        }
    }
    spans
}

/// Perturbed loop spans whose full content never appears contiguously in the clean sequence.
fn novel_loop_spans(clean: &[Signature], perturbed: &[Signature], max_period: usize) -> Vec<LoopSpan> {
    periodic_spans(perturbed, max_period)
        .into_iter()
        .filter(|s| {
            let block = &perturbed[s.start..s.start + s.period * s.repetitions];
            !clean.windows(block.len()).any(|w| w == block)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Rerouting,
    ExtendedExecution,
    EarlyTermination,
    Looping,
}

impl Pattern {
    pub const ALL: [Pattern; 4] =
        [Pattern::Rerouting, Pattern::ExtendedExecution, Pattern::EarlyTermination, Pattern::Looping];

    pub fn token(self) -> &'static str {
        match self {
            Pattern::Rerouting => "rerouting",
            Pattern::ExtendedExecution => "extended_execution",
            Pattern::EarlyTermination => "early_termination",
            Pattern::Looping => "looping",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

pub fn classify_patterns(diag: &ControlFlowDiagnostics) -> BTreeSet<Pattern> {
    let mut out = BTreeSet::new();
    if diag.reroute_count >= 1 {
        out.insert(Pattern::Rerouting);
    }
    if diag.extended_execution {
        out.insert(Pattern::ExtendedExecution);
    }
    if diag.early_terminated {
        out.insert(Pattern::EarlyTermination);
    }
    if !diag.loop_spans.is_empty() {
        out.insert(Pattern::Looping);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::edit_distance;
    use crate::signature::signature_sequence;
    use crate::trace::TraceMeta;

    fn route(agent: &str) -> Payload {
        Payload::RoutingDecision { chosen_agent: agent.into() }
    }

    fn tool(name: &str, op: &str, success: bool) -> Payload {
        Payload::ToolInvocation { tool_name: name.into(), operation: op.into(), params_digest: "0".into(), success }
    }

    fn outcome() -> Payload {
        Payload::TaskOutcome { answer: "division b".into() }
    }

    fn trace(payloads: Vec<Payload>) -> Trace {
        let events = payloads.into_iter().enumerate().map(|(i, p)| Event::new(i, "agent", p).with_tokens(10)).collect();
        Trace::new(TraceMeta::clean("task", "sim", 0), events)
    }

    fn run(clean: &Trace, perturbed: &Trace) -> ControlFlowDiagnostics {
        let al = edit_distance(&signature_sequence(clean), &signature_sequence(perturbed)).unwrap();
        diagnostics(clean, perturbed, &al).unwrap()
    }

    #[test]
    fn identical_traces_have_zero_diagnostics() {
        let t = trace(vec![route("analyst"), tool("parse_table", "parse", true), outcome()]);
        let d = run(&t, &t);
        assert_eq!(d, ControlFlowDiagnostics { length_ratio: 1.0, ..Default::default() });
        assert!(classify_patterns(&d).is_empty());
    }

    #[test]
    fn revenue_detour_is_extended() {
        let clean = trace(vec![route("data_analyst"), tool("parse_table", "parse", true), outcome()]);
        let perturbed = trace(vec![
            route("data_analyst"),
            route("validator"),
            tool("validate_schema", "check", false),
            route("data_analyst"),
            tool("parse_table", "reparse", true),
            tool("cross_validate", "compare", true),
            route("computation_agent"),
            tool("parse_table", "parse", true),
            outcome(),
        ]);
        let d = run(&clean, &perturbed);
        assert!(d.extended_execution);
        assert!(!d.early_terminated);
        assert_eq!(d.tool_calls_added, 3);
        assert_eq!(d.tool_calls_removed, 0);
        assert_eq!(d.introduced_failures, 1);
        assert_eq!(d.reroute_count, 0);
        assert!((d.length_ratio - 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_after_transcription_failure() {
        let clean = trace(vec![
            route("audio_analyst"),
            tool("transcribe", "asr", true),
            route("synthesizer"),
            Payload::AgentOutput { action: "synthesize".into(), is_task_outcome: true },
            outcome(),
        ]);
        let perturbed = trace(vec![
            route("audio_analyst"),
            tool("transcribe", "asr", false),
            Payload::AgentHalt { reason: "transcription failed; stopping".into() },
        ]);
        let d = run(&clean, &perturbed);
        assert!(d.early_terminated);
        assert!(!d.extended_execution);
        assert_eq!(d.introduced_failures, 1);
        assert_eq!(classify_patterns(&d), BTreeSet::from([Pattern::EarlyTermination]));
    }

    #[test]
    fn short_run_with_deletion_suffix_is_truncated() {
        let clean = trace(vec![route("a"), tool("t", "x", true), route("b"), tool("u", "y", true), route("c")]);
        let perturbed = trace(vec![route("a"), tool("t", "x", true), route("b")]);
        let d = run(&clean, &perturbed);
        assert!((d.length_ratio - 0.6).abs() < 1e-12);
        assert!(d.early_terminated);
        assert_eq!(d.tool_calls_removed, 1);
    }

    #[test]
    fn retry_loop_detected() {
        let clean = trace(vec![route("a"), tool("parse", "run", true), outcome()]);
        let perturbed = trace(vec![
            route("a"),
            tool("parse", "retry", false),
            route("retry_handler"),
            tool("parse", "retry", false),
            route("retry_handler"),
            tool("parse", "retry", false),
            route("retry_handler"),
            tool("parse", "run", true),
            outcome(),
        ]);
        let d = run(&clean, &perturbed);
        assert_eq!(d.loop_spans, vec![LoopSpan { start: 1, period: 2, repetitions: 3 }]);
        assert_eq!(d.retry_count, 2);
        assert_eq!(d.introduced_failures, 3);
        let p = classify_patterns(&d);
        assert!(p.contains(&Pattern::Looping) && p.contains(&Pattern::ExtendedExecution));
    }

    #[test]
    fn loops_already_in_clean_are_not_reported() {
        let body = vec![route("a"), tool("poll", "get", true), tool("poll", "get", true), outcome()];
        let t = trace(body);
        let d = run(&t, &t);
        assert!(d.loop_spans.is_empty());
        assert_eq!(d.retry_count, 0);
    }

    #[test]
    fn reroute_counts_routing_substitutions() {
        let clean = trace(vec![route("a"), tool("t", "x", true), route("b"), outcome()]);
        let perturbed = trace(vec![route("fallback"), tool("t", "x", true), route("other"), outcome()]);
        let d = run(&clean, &perturbed);
        assert_eq!(d.reroute_count, 2);
        assert!(classify_patterns(&d).contains(&Pattern::Rerouting));
    }

    #[test]
    fn mismatched_alignment_rejected() {
        let clean = trace(vec![route("a"), outcome()]);
        let other = trace(vec![route("b")]);
        let al = edit_distance(&signature_sequence(&clean), &signature_sequence(&clean)).unwrap();
        assert_eq!(diagnostics(&clean, &other, &al), Err(ControlFlowError::AlignmentMismatch));
    }

    #[test]
    fn periodic_scan_prefers_coverage_then_short_period() {
        assert_eq!(periodic_spans(&[1, 1, 1, 1], 3), vec![LoopSpan { start: 0, period: 1, repetitions: 4 }]);
        assert_eq!(periodic_spans(&[1, 1, 2, 1, 1, 2], 3), vec![LoopSpan { start: 0, period: 3, repetitions: 2 }]);
        assert_eq!(periodic_spans(&[1, 2, 3, 4], 3), vec![]);
        assert_eq!(periodic_spans(&[1, 2, 3, 4, 1, 2, 3, 4], 3), vec![]);
        assert_eq!(
            periodic_spans(&[9, 1, 2, 1, 2, 5, 5], 3),
            vec![LoopSpan { start: 1, period: 2, repetitions: 2 }, LoopSpan { start: 5, period: 1, repetitions: 2 }]
        );
    }

    #[test]
    fn pattern_examples() {
        assert!(classify_patterns(&ControlFlowDiagnostics::default()).is_empty());
        let d = ControlFlowDiagnostics {
            reroute_count: 2,
            loop_spans: vec![LoopSpan { start: 4, period: 2, repetitions: 2 }],
            length_ratio: 1.1,
            ..Default::default()
        };
        assert_eq!(classify_patterns(&d), BTreeSet::from([Pattern::Rerouting, Pattern::Looping]));
        let d = ControlFlowDiagnostics { early_terminated: true, length_ratio: 0.5, ..Default::default() };
        assert_eq!(classify_patterns(&d), BTreeSet::from([Pattern::EarlyTermination]));
    }

    #[test]
    fn pattern_tokens() {
        let tokens: Vec<&str> = Pattern::ALL.iter().map(|p| p.token()).collect();
        assert_eq!(tokens, ["rerouting", "extended_execution", "early_termination", "looping"]);
        assert_eq!(serde_json::to_string(&Pattern::EarlyTermination).unwrap(), "\"early_termination\"");
    }
}
