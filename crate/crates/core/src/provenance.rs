//! Artifact provenance graph and contamination scoping.
//!
//! Every event that produces an artifact lists the artifacts it depended on.
//! Those lists form a DAG over artifact ids; ids referenced but never produced
//! inside the trace (the original attachment, say) are external sources.
//! Contamination scope is forward reachability from the perturbed ids.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::trace::{ArtifactId, EventKind, Trace};

/// A reference to an artifact that the trace only produces later.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingReference {
    pub id: ArtifactId,
    pub event_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProvenanceError {
    #[error("provenance cycle through {0:?}")]
    CycleDetected(Vec<ArtifactId>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceGraph {
    pub nodes: BTreeSet<ArtifactId>,
    pub edges: BTreeSet<(ArtifactId, ArtifactId)>,
    /// Index of the first event producing each in-trace artifact.
    pub producer: BTreeMap<ArtifactId, usize>,
    pub warnings: Vec<DanglingReference>,
    children: BTreeMap<ArtifactId, BTreeSet<ArtifactId>>,
    parents: BTreeMap<ArtifactId, BTreeSet<ArtifactId>>,
}

/// Result of a scoping query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scope {
    /// Seeds plus everything downstream of them.
    pub reached: BTreeSet<ArtifactId>,
    /// Seeds not present in the graph; ignored.
    pub unknown: Vec<ArtifactId>,
}

/// Builds the provenance graph and rejects cyclic logs.
pub fn build_graph(trace: &Trace) -> Result<ProvenanceGraph, ProvenanceError> {
    let graph = ProvenanceGraph::collect(trace);
    graph.check_acyclic()?;
    Ok(graph)
}

/// Whether the task outcome depends, directly or transitively, on any perturbed artifact.
pub fn outcome_contaminated(trace: &Trace, perturbed_ids: &BTreeSet<ArtifactId>) -> bool {
    let graph = ProvenanceGraph::collect(trace);
    let scope = graph.contamination_scope(perturbed_ids);
    graph.outcome_contaminated_by(trace, &scope.reached)
}

impl ProvenanceGraph {
    /// Collects nodes and edges without checking for cycles.
    pub fn collect(trace: &Trace) -> Self {
        let mut g = ProvenanceGraph::default();
        for event in &trace.events {
            if let Some(id) = &event.produced_id {
                g.nodes.insert(id.clone());
                g.producer.entry(id.clone()).or_insert(event.index);
            }
        }
        for event in &trace.events {
            let Some(down) = &event.produced_id else { continue };
            for up in &event.upstream_ids {
                if up == down {
                    continue;
                }
                if g.producer.get(up).is_some_and(|&p| p >= event.index) {
                    g.warnings.push(DanglingReference { id: up.clone(), event_index: event.index });
                }
                g.add_edge(up.clone(), down.clone());
            }
        }
        g
    }

    fn add_edge(&mut self, up: ArtifactId, down: ArtifactId) {
        self.nodes.insert(up.clone());
        self.nodes.insert(down.clone());
        self.children.entry(up.clone()).or_default().insert(down.clone());
        self.parents.entry(down.clone()).or_default().insert(up.clone());
        self.edges.insert((up, down));
    }

    /// Kahn's algorithm; on failure reports the nodes that could not be ordered.
    pub fn check_acyclic(&self) -> Result<(), ProvenanceError> {
        let mut indegree: BTreeMap<&ArtifactId, usize> = self.nodes.iter().map(|n| (n, 0)).collect();
        for (_, down) in &self.edges {
            *indegree.get_mut(down).expect("edge endpoints are nodes") += 1;
        }
        let mut ready: VecDeque<&ArtifactId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
        let mut ordered = 0usize;
        while let Some(n) = ready.pop_front() {
            ordered += 1;
            for child in self.children.get(n).into_iter().flatten() {
                let d = indegree.get_mut(child).expect("edge endpoints are nodes");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(child);
                }
            }
        }
        if ordered == self.nodes.len() {
            Ok(())
        } else {
            let stuck = indegree.into_iter().filter(|(_, d)| *d > 0).map(|(n, _)| n.clone()).collect();
            Err(ProvenanceError::CycleDetected(stuck))
        }
    }

    /// Artifacts that are referenced but never produced in the trace.
    pub fn external_inputs(&self) -> impl Iterator<Item = &ArtifactId> {
        self.nodes.iter().filter(|n| !self.producer.contains_key(*n))
    }

    /// Forward closure of `seeds`, seeds included.
    pub fn contamination_scope(&self, seeds: &BTreeSet<ArtifactId>) -> Scope {
        let (known, unknown): (Vec<&ArtifactId>, Vec<&ArtifactId>) = seeds.iter().partition(|s| self.nodes.contains(*s));
        Scope {
            reached: walk(known, &self.children),
            unknown: unknown.into_iter().cloned().collect(),
        }
    }

    /// Backward closure of `ids`, ids included (unknown ids are kept as-is).
    pub fn ancestors<'a>(&self, ids: impl IntoIterator<Item = &'a ArtifactId>) -> BTreeSet<ArtifactId> {
        walk(ids.into_iter().collect(), &self.parents)
    }

    /// True when the trace's task outcome (its output or any of its inputs,
    /// transitively) lies inside `scope`. False when there is no outcome.
    pub fn outcome_contaminated_by(&self, trace: &Trace, scope: &BTreeSet<ArtifactId>) -> bool {
        let Some(outcome) = trace.events.iter().find(|e| e.kind() == EventKind::TaskOutcome) else {
            return false;
        };
        let direct = outcome.produced_id.iter().chain(outcome.upstream_ids.iter());
        self.ancestors(direct).iter().any(|id| scope.contains(id))
    }

    /// Graphviz DOT rendering; ids in `highlight` are filled.
    pub fn to_dot(&self, highlight: Option<&BTreeSet<ArtifactId>>) -> String {
        let mut out = String::from("digraph provenance {\n  rankdir=LR;\n");
        for node in &self.nodes {
            let mut attrs = Vec::new();
            if !self.producer.contains_key(node) {
                attrs.push("shape=box".to_owned());
            }
            if highlight.is_some_and(|h| h.contains(node)) {
                attrs.push("style=filled".to_owned());
                attrs.push("fillcolor=\"#f4a3a3\"".to_owned());
            }
            let _ = write!(out, "  {}", dot_id(node.as_str()));
            if !attrs.is_empty() {
                let _ = write!(out, " [{}]", attrs.join(", "));
            }
            out.push_str(";\n");
        }
        for (up, down) in &self.edges {
            let _ = writeln!(out, "  {} -> {};", dot_id(up.as_str()), dot_id(down.as_str()));
        }
        out.push_str("}\n");
        out
    }
}

fn walk(start: Vec<&ArtifactId>, adjacency: &BTreeMap<ArtifactId, BTreeSet<ArtifactId>>) -> BTreeSet<ArtifactId> {
    let mut seen: BTreeSet<ArtifactId> = start.iter().map(|s| (*s).clone()).collect();
    let mut work: Vec<ArtifactId> = seen.iter().cloned().collect();
    while let Some(n) = work.pop() {
        for next in adjacency.get(&n).into_iter().flatten() {
            if seen.insert(next.clone()) {
                work.push(next.clone());
            }
        }
    }
    seen
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Event, Payload, TraceMeta};

    fn step(i: usize, produces: Option<&str>, deps: &[&str]) -> Event {
        let mut e = Event::new(i, "a", Payload::AgentOutput { action: "work".into(), is_task_outcome: false });
        e.produced_id = produces.map(ArtifactId::from);
        e.upstream_ids = deps.iter().map(|d| ArtifactId::from(*d)).collect();
        e
    }

    fn outcome(i: usize, deps: &[&str]) -> Event {
        let mut e = Event::new(i, "s", Payload::TaskOutcome { answer: "x".into() });
        e.upstream_ids = deps.iter().map(|d| ArtifactId::from(*d)).collect();
        e
    }

    fn trace(events: Vec<Event>) -> Trace {
        Trace::new(TraceMeta::clean("t", "m", 0), events)
    }

    fn ids(xs: &[&str]) -> BTreeSet<ArtifactId> {
        xs.iter().map(|x| ArtifactId::from(*x)).collect()
    }

    fn pipeline() -> Trace {
        trace(vec![
            step(0, Some("parse"), &[]),
            step(1, Some("compute"), &["parse"]),
            step(2, Some("answer"), &["compute"]),
            outcome(3, &["answer"]),
        ])
    }

    #[test]
    fn no_artifacts_no_graph() {
        let g = build_graph(&trace(vec![step(0, None, &[]), outcome(1, &[])])).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn linear_pipeline_is_a_path() {
        let g = build_graph(&pipeline()).unwrap();
        assert_eq!(g.nodes, ids(&["parse", "compute", "answer"]));
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.producer[&ArtifactId::from("answer")], 2);
        assert_eq!(g.contamination_scope(&ids(&["parse"])).reached, ids(&["parse", "compute", "answer"]));
        assert!(g.contamination_scope(&BTreeSet::new()).reached.is_empty());
    }

    #[test]
    fn external_inputs_become_sources() {
        let t = trace(vec![step(0, Some("table"), &["attachment.xlsx"]), outcome(1, &["table"])]);
        let g = build_graph(&t).unwrap();
        assert_eq!(g.external_inputs().collect::<Vec<_>>(), vec![&ArtifactId::from("attachment.xlsx")]);
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn unknown_seeds_reported_and_ignored() {
        let g = build_graph(&pipeline()).unwrap();
        let s = g.contamination_scope(&ids(&["compute", "ghost"]));
        assert_eq!(s.reached, ids(&["compute", "answer"]));
        assert_eq!(s.unknown, vec![ArtifactId::from("ghost")]);
    }

    #[test]
    fn forward_reference_warns() {
        let t = trace(vec![step(0, Some("a"), &["b"]), step(1, Some("b"), &[])]);
        let g = build_graph(&t).unwrap();
        assert_eq!(g.warnings, vec![DanglingReference { id: "b".into(), event_index: 0 }]);
    }

    #[test]
    fn cycles_are_detected() {
        let t = trace(vec![step(0, Some("a"), &["b"]), step(1, Some("b"), &["a"])]);
        match build_graph(&t) {
            Err(ProvenanceError::CycleDetected(ids)) => assert_eq!(ids, vec!["a".into(), "b".into()]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn outcome_contamination() {
        let t = pipeline();
        assert!(outcome_contaminated(&t, &ids(&["parse"])));
        let side = trace(vec![
            step(0, Some("parse"), &[]),
            step(1, Some("side"), &["parse"]),
            step(2, Some("clean_input"), &[]),
            outcome(3, &["clean_input"]),
        ]);
        assert!(!outcome_contaminated(&side, &ids(&["parse"])));
        assert!(!outcome_contaminated(&trace(vec![step(0, Some("parse"), &[])]), &ids(&["parse"])));
    }

    #[test]
    fn dot_export_marks_scope() {
        let g = build_graph(&pipeline()).unwrap();
        let scope = g.contamination_scope(&ids(&["compute"])).reached;
        let dot = g.to_dot(Some(&scope));
        assert!(dot.starts_with("digraph provenance {"));
        assert!(dot.contains("\"parse\" -> \"compute\";"));
        assert!(dot.contains("\"answer\" [style=filled"));
        assert!(!dot.contains("\"parse\" [style=filled"));
    }
}
