use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{ArtifactId, Event, EventKind, Payload, Trace, TraceMeta};

/// Tag that opens the metadata header line.
pub const META_TAG: &str = "#meta";

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: schema violation on field `{field}`")]
    SchemaViolation { line: usize, field: String },
    #[error("missing `#meta` header line")]
    MetadataMissing,
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a trace log: one `#meta` header line followed by one JSON event per line.
///
/// Blank lines are skipped; line numbers in errors are 1-based and count them.
pub fn parse_trace<R: BufRead>(input: R) -> Result<Trace, TraceParseError> {
    let mut meta: Option<TraceMeta> = None;
    let mut events = Vec::new();

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        match meta {
            None => {
                let Some(rest) = line.strip_prefix(META_TAG) else {
                    return Err(TraceParseError::MetadataMissing);
                };
                let parsed: TraceMeta = serde_json::from_str(rest.trim_start()).map_err(|e| {
                    TraceParseError::MalformedLine { line: line_no, reason: e.to_string() }
                })?;
                meta = Some(parsed);
            }
            Some(_) => {
                if line.starts_with(META_TAG) {
                    return Err(TraceParseError::MalformedLine {
                        line: line_no,
                        reason: "duplicate header".into(),
                    });
                }
                events.push(parse_event(line, line_no)?);
            }
        }
    }

    let meta = meta.ok_or(TraceParseError::MetadataMissing)?;
    Ok(Trace { meta, events })
}

fn parse_event(line: &str, line_no: usize) -> Result<Event, TraceParseError> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| TraceParseError::MalformedLine { line: line_no, reason: e.to_string() })?;
    let Value::Object(mut obj) = value else {
        return Err(TraceParseError::MalformedLine {
            line: line_no,
            reason: "event record is not an object".into(),
        });
    };

    let mut fields = Fields { obj: &mut obj, line: line_no };
    let index = fields.usize("index")?;
    let kind_token = fields.string("kind")?;
    let kind = EventKind::from_token(&kind_token).ok_or_else(|| TraceParseError::SchemaViolation {
        line: line_no,
        field: "kind".into(),
    })?;
    let agent = fields.string("agent")?;

    let payload = match kind {
        EventKind::RoutingDecision => Payload::RoutingDecision { chosen_agent: fields.string("chosen_agent")? },
        EventKind::ToolInvocation => Payload::ToolInvocation {
            tool_name: fields.string("tool_name")?,
            operation: fields.string("operation")?,
            params_digest: fields.string("params_digest")?,
            success: fields.bool("success")?,
        },
        EventKind::MemoryWrite => Payload::MemoryWrite {
            entry_id: ArtifactId(fields.string("entry_id")?),
            entry_type: fields.string("entry_type")?,
        },
        EventKind::MemoryRead => Payload::MemoryRead { entry_id: ArtifactId(fields.string("entry_id")?) },
        EventKind::RetrievalShown => Payload::RetrievalShown { entry_ids: fields.ids("entry_ids")? },
        EventKind::AgentOutput => Payload::AgentOutput {
            action: fields.string("action")?,
            is_task_outcome: fields.bool("is_task_outcome")?,
        },
        EventKind::TaskOutcome => Payload::TaskOutcome { answer: fields.string("answer")? },
        EventKind::ToolFailure => Payload::ToolFailure {
            tool_name: fields.string("tool_name")?,
            reason: fields.string("reason")?,
        },
        EventKind::AgentHalt => Payload::AgentHalt { reason: fields.string("reason")? },
    };

    let token_count = match fields.take("token_count") {
        None => 0,
        Some(v) => v.as_u64().ok_or_else(|| fields.violation("token_count"))?,
    };
    let produced_id = match fields.take("produced_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(ArtifactId(s)),
        Some(_) => return Err(fields.violation("produced_id")),
    };
    let upstream_ids = match fields.obj.contains_key("upstream_ids") {
        false => Vec::new(),
        true => fields.ids("upstream_ids")?,
    };

    let extra: BTreeMap<String, Value> = std::mem::take(fields.obj).into_iter().collect();
    Ok(Event { index, agent, payload, token_count, produced_id, upstream_ids, extra })
}

struct Fields<'a> {
    obj: &'a mut Map<String, Value>,
    line: usize,
}

impl Fields<'_> {
    fn violation(&self, field: &str) -> TraceParseError {
        TraceParseError::SchemaViolation { line: self.line, field: field.to_owned() }
    }

    fn take(&mut self, field: &str) -> Option<Value> {
        self.obj.remove(field)
    }

    fn required(&mut self, field: &str) -> Result<Value, TraceParseError> {
        self.take(field).ok_or_else(|| self.violation(field))
    }

    fn string(&mut self, field: &str) -> Result<String, TraceParseError> {
        match self.required(field)? {
            Value::String(s) => Ok(s),
            _ => Err(self.violation(field)),
        }
    }

    fn bool(&mut self, field: &str) -> Result<bool, TraceParseError> {
        self.required(field)?.as_bool().ok_or_else(|| self.violation(field))
    }

    fn usize(&mut self, field: &str) -> Result<usize, TraceParseError> {
        self.required(field)?
            .as_u64()
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| self.violation(field))
    }

    fn ids(&mut self, field: &str) -> Result<Vec<ArtifactId>, TraceParseError> {
        let Value::Array(items) = self.required(field)? else {
            return Err(self.violation(field));
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(ArtifactId(s)),
                _ => Err(self.violation(field)),
            })
            .collect()
    }
}

/// Canonical, byte-deterministic serialization. Ends with a trailing newline.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    let meta = serde_json::to_string(&trace.meta).expect("trace metadata serializes");
    out.push_str(META_TAG);
    out.push(' ');
    out.push_str(&meta);
    out.push('\n');
    for event in &trace.events {
        out.push_str(&serialize_event(event));
        out.push('\n');
    }
    out
}

/// One event as a single canonical JSON line (no trailing newline).
///
/// Field order: `index`, `kind`, `agent`, payload fields in schema order,
/// `token_count`, `produced_id`, `upstream_ids`, then auxiliary fields sorted by key.
pub fn serialize_event(event: &Event) -> String {
    let mut line = String::with_capacity(128);
    line.push('{');
    let _ = write!(line, "\"index\":{}", event.index);
    push_str_field(&mut line, "kind", event.kind().token());
    push_str_field(&mut line, "agent", &event.agent);

    match &event.payload {
        Payload::RoutingDecision { chosen_agent } => push_str_field(&mut line, "chosen_agent", chosen_agent),
        Payload::ToolInvocation { tool_name, operation, params_digest, success } => {
            push_str_field(&mut line, "tool_name", tool_name);
            push_str_field(&mut line, "operation", operation);
            push_str_field(&mut line, "params_digest", params_digest);
            push_raw_field(&mut line, "success", if *success { "true" } else { "false" });
        }
        Payload::MemoryWrite { entry_id, entry_type } => {
            push_str_field(&mut line, "entry_id", entry_id.as_str());
            push_str_field(&mut line, "entry_type", entry_type);
        }
        Payload::MemoryRead { entry_id } => push_str_field(&mut line, "entry_id", entry_id.as_str()),
        Payload::RetrievalShown { entry_ids } => push_ids_field(&mut line, "entry_ids", entry_ids),
        Payload::AgentOutput { action, is_task_outcome } => {
            push_str_field(&mut line, "action", action);
            push_raw_field(&mut line, "is_task_outcome", if *is_task_outcome { "true" } else { "false" });
        }
        Payload::TaskOutcome { answer } => push_str_field(&mut line, "answer", answer),
        Payload::ToolFailure { tool_name, reason } => {
            push_str_field(&mut line, "tool_name", tool_name);
            push_str_field(&mut line, "reason", reason);
        }
        Payload::AgentHalt { reason } => push_str_field(&mut line, "reason", reason),
    }

    push_raw_field(&mut line, "token_count", &event.token_count.to_string());
    match &event.produced_id {
        Some(id) => push_str_field(&mut line, "produced_id", id.as_str()),
        None => push_raw_field(&mut line, "produced_id", "null"),
    }
    push_ids_field(&mut line, "upstream_ids", &event.upstream_ids);

    for (key, value) in &event.extra {
        let rendered = serde_json::to_string(value).expect("json value serializes");
        push_raw_field(&mut line, key, &rendered);
    }
    line.push('}');
    line
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn push_raw_field(line: &mut String, key: &str, raw: &str) {
    line.push(',');
    line.push_str(&json_str(key));
    line.push(':');
    line.push_str(raw);
}

fn push_str_field(line: &mut String, key: &str, value: &str) {
    line.push(',');
    line.push_str(&json_str(key));
    line.push(':');
    line.push_str(&json_str(value));
}

fn push_ids_field(line: &mut String, key: &str, ids: &[ArtifactId]) {
    let list: Vec<&str> = ids.iter().map(ArtifactId::as_str).collect();
    let rendered = serde_json::to_string(&list).expect("id list serializes");
    push_raw_field(line, key, &rendered);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceMeta;

    fn header() -> String {
        format!("{META_TAG} {{\"task_id\":\"t1\",\"model_id\":\"m\",\"condition\":\"clean\",\"seed\":7,\"perturbation\":null}}\n")
    }

    fn parse(s: &str) -> Result<Trace, TraceParseError> {
        parse_trace(s.as_bytes())
    }

    #[test]
    fn empty_event_stream_with_header() {
        let t = parse(&header()).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.meta.task_id, "t1");
    }

    #[test]
    fn five_lines_keep_order() {
        let mut s = header();
        for i in 0..5 {
            s.push_str(&format!(
                "{{\"index\":{i},\"kind\":\"routing_decision\",\"agent\":\"coord\",\"chosen_agent\":\"a{i}\"}}\n"
            ));
        }
        let t = parse(&s).unwrap();
        let idx: Vec<usize> = t.events.iter().map(|e| e.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.events[3].payload, Payload::RoutingDecision { chosen_agent: "a3".into() });
    }

    #[test]
    fn missing_payload_field_is_schema_violation() {
        let valid = "{\"index\":0,\"kind\":\"routing_decision\",\"agent\":\"coord\",\"chosen_agent\":\"validator\"}";
        assert!(parse(&format!("{}{valid}\n", header())).is_ok());
        let broken = valid.replace(",\"chosen_agent\":\"validator\"", "");
        match parse(&format!("{}{broken}\n", header())) {
            Err(TraceParseError::SchemaViolation { line, field }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "chosen_agent");
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        let s = format!("{}{{\"index\":0,\"kind\":\"heartbeat\",\"agent\":\"x\"}}\n", header());
        assert!(matches!(parse(&s), Err(TraceParseError::SchemaViolation { field, .. }) if field == "kind"));
    }

    #[test]
    fn header_required() {
        assert!(matches!(parse(""), Err(TraceParseError::MetadataMissing)));
        let s = "{\"index\":0,\"kind\":\"agent_halt\",\"agent\":\"x\",\"reason\":\"r\"}\n";
        assert!(matches!(parse(s), Err(TraceParseError::MetadataMissing)));
    }

    #[test]
    fn garbage_line_is_malformed() {
        let s = format!("{}not json\n", header());
        assert!(matches!(parse(&s), Err(TraceParseError::MalformedLine { line: 2, .. })));
        let s = format!("{}[1,2]\n", header());
        assert!(matches!(parse(&s), Err(TraceParseError::MalformedLine { line: 2, .. })));
    }

    #[test]
    fn wrong_field_type_is_schema_violation() {
        let s = format!(
            "{}{{\"index\":0,\"kind\":\"tool_invocation\",\"agent\":\"x\",\"tool_name\":\"t\",\"operation\":\"o\",\"params_digest\":\"d\",\"success\":\"yes\"}}\n",
            header()
        );
        assert!(matches!(parse(&s), Err(TraceParseError::SchemaViolation { field, .. }) if field == "success"));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let s = format!(
            "{}{{\"index\":0,\"kind\":\"agent_output\",\"agent\":\"x\",\"action\":\"summarize\",\"is_task_outcome\":false,\"zeta\":[1,{{\"b\":2,\"a\":1}}],\"alpha\":\"keep\"}}\n",
            header()
        );
        let t = parse(&s).unwrap();
        assert_eq!(t.events[0].extra.len(), 2);
        let out = serialize_trace(&t);
        assert!(out.contains("\"alpha\":\"keep\""));
        assert_eq!(parse(&out).unwrap(), t);
    }

    #[test]
    fn zero_events_serializes_to_header_only() {
        let t = Trace::new(TraceMeta::clean("t", "m", 1), vec![]);
        let s = serialize_trace(&t);
        assert_eq!(s.lines().count(), 1);
        assert!(s.starts_with(META_TAG));
        assert_eq!(serialize_trace(&t), s);
    }

    #[test]
    fn crlf_and_blank_lines_tolerated() {
        let s = header().replace('\n', "\r\n")
            + "\r\n{\"index\":0,\"kind\":\"task_outcome\",\"agent\":\"s\",\"answer\":\"42\"}\r\n";
        let t = parse(&s).unwrap();
        assert_eq!(t.answer(), Some("42"));
    }
}
