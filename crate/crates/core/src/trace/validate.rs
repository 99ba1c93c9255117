use std::fmt;

use super::{Condition, EventKind, Trace};

/// Trace and event invariants checked by [`validate_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Event at position p does not carry index p.
    IndexGap,
    MultipleTaskOutcomes,
    TaskOutcomeNotFinal,
    SelfDependency,
    /// `condition` is perturbed but no perturbation record is attached, or vice versa.
    ConditionMismatch,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::IndexGap => "index gap",
            Rule::MultipleTaskOutcomes => "multiple TaskOutcome events",
            Rule::TaskOutcomeNotFinal => "TaskOutcome not final",
            Rule::SelfDependency => "self-dependency",
            Rule::ConditionMismatch => "condition/perturbation mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position of the offending event; `None` for trace-level rules.
    pub event_index: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event_index {
            Some(i) => write!(f, "event {i}: {}", self.rule),
            None => write!(f, "trace: {}", self.rule),
        }
    }
}

/// Returns every invariant violation; empty iff the trace is valid.
pub fn validate_trace(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = trace.events.len();

    let perturbed = trace.meta.condition == Condition::Perturbed;
    if perturbed != trace.meta.perturbation.is_some() {
        out.push(Violation { event_index: None, rule: Rule::ConditionMismatch });
    }

    let mut outcomes = 0usize;
    for (pos, event) in trace.events.iter().enumerate() {
        if event.index != pos {
            out.push(Violation { event_index: Some(pos), rule: Rule::IndexGap });
        }
        if let Some(id) = &event.produced_id {
            if event.upstream_ids.contains(id) {
                out.push(Violation { event_index: Some(pos), rule: Rule::SelfDependency });
            }
        }
        if event.kind() == EventKind::TaskOutcome {
            outcomes += 1;
            if outcomes > 1 {
                out.push(Violation { event_index: Some(pos), rule: Rule::MultipleTaskOutcomes });
            } else if pos + 1 != n {
                out.push(Violation { event_index: Some(pos), rule: Rule::TaskOutcomeNotFinal });
            }
        }
    }
    out
}
