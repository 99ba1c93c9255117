//! Structured execution traces.
//!
//! A [`Trace`] is the ordered list of events logged during one workflow run,
//! plus the run metadata needed to pair it with its counterpart. The on-disk
//! form is newline-delimited JSON records preceded by a single `#meta` header
//! line; see [`parse_trace`] and [`serialize_trace`].

mod validate;
mod wire;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::perturb::PerturbationRecord;

pub use validate::{validate_trace, Rule, Violation};
pub use wire::{parse_trace, serialize_event, serialize_trace, TraceParseError, META_TAG};

/// Identifier of an artifact (tool result, memory entry, agent message, external input).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactId(pub String);

impl ArtifactId {
    pub fn new(id: impl Into<String>) -> Self {
        ArtifactId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArtifactId {
    fn from(s: &str) -> Self {
        ArtifactId(s.to_owned())
    }
}

/// The nine logged event types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    RoutingDecision,
    ToolInvocation,
    MemoryWrite,
    MemoryRead,
    RetrievalShown,
    AgentOutput,
    TaskOutcome,
    ToolFailure,
    AgentHalt,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::RoutingDecision,
        EventKind::ToolInvocation,
        EventKind::MemoryWrite,
        EventKind::MemoryRead,
        EventKind::RetrievalShown,
        EventKind::AgentOutput,
        EventKind::TaskOutcome,
        EventKind::ToolFailure,
        EventKind::AgentHalt,
    ];

    /// Wire token, e.g. `routing_decision`.
    pub fn token(self) -> &'static str {
        match self {
            EventKind::RoutingDecision => "routing_decision",
            EventKind::ToolInvocation => "tool_invocation",
            EventKind::MemoryWrite => "memory_write",
            EventKind::MemoryRead => "memory_read",
            EventKind::RetrievalShown => "retrieval_shown",
            EventKind::AgentOutput => "agent_output",
            EventKind::TaskOutcome => "task_outcome",
            EventKind::ToolFailure => "tool_failure",
            EventKind::AgentHalt => "agent_halt",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        EventKind::ALL.into_iter().find(|k| k.token() == token)
    }

    /// Payload fields required on the wire for this kind, in canonical order.
    pub fn payload_fields(self) -> &'static [&'static str] {
        match self {
            EventKind::RoutingDecision => &["chosen_agent"],
            EventKind::ToolInvocation => &["tool_name", "operation", "params_digest", "success"],
            EventKind::MemoryWrite => &["entry_id", "entry_type"],
            EventKind::MemoryRead => &["entry_id"],
            EventKind::RetrievalShown => &["entry_ids"],
            EventKind::AgentOutput => &["action", "is_task_outcome"],
            EventKind::TaskOutcome => &["answer"],
            EventKind::ToolFailure => &["tool_name", "reason"],
            EventKind::AgentHalt => &["reason"],
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Kind-specific event payload. The variant determines the event kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    RoutingDecision {
        chosen_agent: String,
    },
    ToolInvocation {
        tool_name: String,
        operation: String,
        params_digest: String,
        success: bool,
    },
    MemoryWrite {
        entry_id: ArtifactId,
        entry_type: String,
    },
    MemoryRead {
        entry_id: ArtifactId,
    },
    RetrievalShown {
        entry_ids: Vec<ArtifactId>,
    },
    AgentOutput {
        action: String,
        is_task_outcome: bool,
    },
    TaskOutcome {
        answer: String,
    },
    ToolFailure {
        tool_name: String,
        reason: String,
    },
    AgentHalt {
        reason: String,
    },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::RoutingDecision { .. } => EventKind::RoutingDecision,
            Payload::ToolInvocation { .. } => EventKind::ToolInvocation,
            Payload::MemoryWrite { .. } => EventKind::MemoryWrite,
            Payload::MemoryRead { .. } => EventKind::MemoryRead,
            Payload::RetrievalShown { .. } => EventKind::RetrievalShown,
            Payload::AgentOutput { .. } => EventKind::AgentOutput,
            Payload::TaskOutcome { .. } => EventKind::TaskOutcome,
            Payload::ToolFailure { .. } => EventKind::ToolFailure,
            Payload::AgentHalt { .. } => EventKind::AgentHalt,
        }
    }
}

/// One logged workflow event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub index: usize,
    pub agent: String,
    pub payload: Payload,
    /// Tokens consumed producing this event; 0 means unknown.
    pub token_count: u64,
    pub produced_id: Option<ArtifactId>,
    pub upstream_ids: Vec<ArtifactId>,
    /// Auxiliary fields not part of the schema, carried through untouched.
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Event {
    pub fn new(index: usize, agent: impl Into<String>, payload: Payload) -> Self {
        Event {
            index,
            agent: agent.into(),
            payload,
            token_count: 0,
            produced_id: None,
            upstream_ids: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn with_tokens(mut self, tokens: u64) -> Self {
        self.token_count = tokens;
        self
    }

    pub fn produces(mut self, id: impl Into<String>) -> Self {
        self.produced_id = Some(ArtifactId(id.into()));
        self
    }

    pub fn depends_on<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.upstream_ids = ids.into_iter().map(|s| ArtifactId(s.into())).collect();
        self
    }

    /// Answer text when this is a task-outcome event.
    pub fn answer(&self) -> Option<&str> {
        match &self.payload {
            Payload::TaskOutcome { answer } => Some(answer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub task_id: String,
    pub model_id: String,
    pub condition: Condition,
    pub seed: u64,
    #[serde(default)]
    pub perturbation: Option<PerturbationRecord>,
}

impl TraceMeta {
    pub fn clean(task_id: impl Into<String>, model_id: impl Into<String>, seed: u64) -> Self {
        TraceMeta {
            task_id: task_id.into(),
            model_id: model_id.into(),
            condition: Condition::Clean,
            seed,
            perturbation: None,
        }
    }

    pub fn perturbed(
        task_id: impl Into<String>,
        model_id: impl Into<String>,
        seed: u64,
        record: PerturbationRecord,
    ) -> Self {
        TraceMeta {
            task_id: task_id.into(),
            model_id: model_id.into(),
            condition: Condition::Perturbed,
            seed,
            perturbation: Some(record),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(meta: TraceMeta, events: Vec<Event>) -> Self {
        Trace { meta, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The task-outcome event, if one was logged.
    pub fn outcome(&self) -> Option<&Event> {
        self.events.iter().find(|e| e.kind() == EventKind::TaskOutcome)
    }

    pub fn answer(&self) -> Option<&str> {
        self.outcome().and_then(Event::answer)
    }

    pub fn total_tokens(&self) -> u64 {
        self.events.iter().map(|e| e.token_count).sum()
    }

    /// True when any event has an unknown (zero) token count.
    pub fn has_unknown_token_counts(&self) -> bool {
        self.events.iter().any(|e| e.token_count == 0)
    }
}
