//! Structural signatures: the control-flow abstraction of an event.
//!
//! A signature keeps only the fields that describe *what the workflow did*
//! (which agent was chosen, which tool ran and whether it succeeded, what kind
//! of memory entry was written) and drops lexical content such as answers,
//! parameter digests, identifiers and token counts. Two events compare equal
//! structurally iff their signatures are equal.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::{ArtifactId, Event, EventKind, Payload, Trace};

/// Marker value used for task-outcome signatures; the answer never enters.
pub const OUTCOME_MARKER: &str = "set";
/// Entry type used for memory reads whose target cannot be resolved.
pub const UNRESOLVED_READ: &str = "read";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub kind: EventKind,
    pub key_fields: Vec<(&'static str, String)>,
}

impl Signature {
    fn new(kind: EventKind, key_fields: Vec<(&'static str, String)>) -> Self {
        Signature { kind, key_fields }
    }

    /// Canonical text form `kind|field=value|...`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.token())?;
        for (name, value) in &self.key_fields {
            write!(f, "|{name}=")?;
            for c in value.chars() {
                if matches!(c, '|' | '=' | '\\') {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

/// Bucket for free-text halt reasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltClass {
    EarlyStop,
    MaxSteps,
    Error,
}

impl HaltClass {
    pub fn of(reason: &str) -> Self {
        let r = reason.to_lowercase();
        if r.contains("max") && r.contains("step") {
            HaltClass::MaxSteps
        } else if ["error", "exception", "panic", "crash", "timeout", "timed out"]
            .iter()
            .any(|w| r.contains(w))
        {
            HaltClass::Error
        } else {
            HaltClass::EarlyStop
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            HaltClass::EarlyStop => "early_stop",
            HaltClass::MaxSteps => "max_steps",
            HaltClass::Error => "error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignatureConfig {
    /// Whether retrieval-shown events take part in the signature sequence.
    pub include_retrieval: bool,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig { include_retrieval: true }
    }
}

/// Signature of a single event, without memory-read resolution.
pub fn signature_of(event: &Event) -> Signature {
    signature_with(event, &|_| None)
}

fn signature_with<'a>(event: &Event, resolve: &dyn Fn(&ArtifactId) -> Option<&'a str>) -> Signature {
    let kind = event.kind();
    let fields = match &event.payload {
        Payload::RoutingDecision { chosen_agent } => vec![("chosen_agent", chosen_agent.clone())],
        Payload::ToolInvocation { tool_name, operation, success, .. } => vec![
            ("tool_name", tool_name.clone()),
            ("operation", operation.clone()),
            ("success", success.to_string()),
        ],
        Payload::MemoryWrite { entry_type, .. } => vec![("entry_type", entry_type.clone())],
        Payload::MemoryRead { entry_id } => {
            vec![("entry_type", resolve(entry_id).unwrap_or(UNRESOLVED_READ).to_owned())]
        }
        Payload::RetrievalShown { entry_ids } => vec![("count", entry_ids.len().to_string())],
        Payload::AgentOutput { action, is_task_outcome } => {
            vec![("action", action.clone()), ("is_task_outcome", is_task_outcome.to_string())]
        }
        Payload::TaskOutcome { .. } => vec![("outcome", OUTCOME_MARKER.to_owned())],
        Payload::ToolFailure { tool_name, .. } => vec![("tool_name", tool_name.clone())],
        Payload::AgentHalt { reason } => vec![("reason", HaltClass::of(reason).token().to_owned())],
    };
    Signature::new(kind, fields)
}

/// Signature sequence of a trace with default configuration.
pub fn signature_sequence(trace: &Trace) -> Vec<Signature> {
    signature_sequence_with(trace, SignatureConfig::default())
}

/// Signature sequence; memory reads resolve to the entry type of the write that
/// produced their target, when the trace contains one.
pub fn signature_sequence_with(trace: &Trace, config: SignatureConfig) -> Vec<Signature> {
    let mut entry_types: HashMap<&ArtifactId, &str> = HashMap::new();
    for event in &trace.events {
        if let Payload::MemoryWrite { entry_id, entry_type } = &event.payload {
            entry_types.entry(entry_id).or_insert(entry_type.as_str());
        }
    }
    let resolve = |id: &ArtifactId| entry_types.get(id).copied();
    trace
        .events
        .iter()
        .filter(|e| config.include_retrieval || e.kind() != EventKind::RetrievalShown)
        .map(|e| signature_with(e, &resolve))
        .collect()
}
