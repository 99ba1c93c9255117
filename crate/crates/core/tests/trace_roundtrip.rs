use proptest::prelude::*;
use trace_contam_core::trace::{parse_trace, serialize_trace, validate_trace};
use trace_contam_core::{generate_corpus, ArtifactId, Event, Payload, Trace, TraceMeta};

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z_]{1,8}",
        any::<String>(),
        Just("quote \" back\\slash\ttab\nnewline".to_string()),
    ]
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        text().prop_map(|chosen_agent| Payload::RoutingDecision { chosen_agent }),
        (text(), text(), "[0-9a-f]{16}", any::<bool>()).prop_map(|(tool_name, operation, params_digest, success)| {
            Payload::ToolInvocation { tool_name, operation, params_digest, success }
        }),
        (text(), text()).prop_map(|(id, entry_type)| Payload::MemoryWrite { entry_id: ArtifactId(id), entry_type }),
        text().prop_map(|id| Payload::MemoryRead { entry_id: ArtifactId(id) }),
        prop::collection::vec(text(), 0..4)
            .prop_map(|ids| Payload::RetrievalShown { entry_ids: ids.into_iter().map(ArtifactId).collect() }),
        (text(), any::<bool>()).prop_map(|(action, is_task_outcome)| Payload::AgentOutput { action, is_task_outcome }),
        text().prop_map(|answer| Payload::TaskOutcome { answer }),
        (text(), text()).prop_map(|(tool_name, reason)| Payload::ToolFailure { tool_name, reason }),
        text().prop_map(|reason| Payload::AgentHalt { reason }),
    ]
}

fn trace() -> impl Strategy<Value = Trace> {
    let event = (text(), payload(), any::<u64>(), prop::option::of(text()), prop::collection::vec(text(), 0..3));
    (text(), any::<u64>(), prop::collection::vec(event, 0..12)).prop_map(|(task, seed, events)| {
        let events = events
            .into_iter()
            .enumerate()
            .map(|(i, (agent, payload, tokens, produced, upstream))| {
                let mut e = Event::new(i, agent, payload).with_tokens(tokens).depends_on(upstream);
                if let Some(p) = produced {
                    e = e.produces(p);
                }
                e
            })
            .collect();
        Trace::new(TraceMeta::clean(task, "model", seed), events)
    })
}

proptest! {
    #[test]
    fn serialize_parse_serialize_is_identity(t in trace()) {
        let first = serialize_trace(&t);
        let parsed = parse_trace(first.as_bytes()).unwrap();
        prop_assert_eq!(&parsed, &t);
        prop_assert_eq!(serialize_trace(&parsed), first);
    }
}

#[test]
fn generated_corpus_round_trips() {
    for p in generate_corpus(5, 17) {
        for t in [&p.clean, &p.perturbed] {
            let s = serialize_trace(t);
            let back = parse_trace(s.as_bytes()).unwrap();
            assert_eq!(serialize_trace(&back), s);
            assert!(validate_trace(&back).is_empty());
        }
    }
}

#[test]
fn unknown_fields_survive() {
    let input = "#meta {\"task_id\":\"t\",\"model_id\":\"m\",\"condition\":\"clean\",\"seed\":1}\n\
{\"index\":0,\"kind\":\"agent_halt\",\"agent\":\"a\",\"reason\":\"x\",\"token_count\":3,\"produced_id\":null,\"upstream_ids\":[],\"zeta\":{\"k\":[1,2]},\"alpha\":true}\n";
    let t = parse_trace(input.as_bytes()).unwrap();
    assert_eq!(t.events[0].extra.len(), 2);
    let out = serialize_trace(&t);
    assert!(out.find("\"alpha\"").unwrap() < out.find("\"zeta\"").unwrap());
    assert_eq!(serialize_trace(&parse_trace(out.as_bytes()).unwrap()), out);
}
