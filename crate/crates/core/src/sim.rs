//! Deterministic generator of clean/perturbed trace pairs with known labels.
//!
//! Clean traces follow a fixed plan: a routing decision, a repeating work
//! cycle (tool call, memory write, routing, memory read, agent output) and a
//! task outcome. Each scenario then derives the perturbed trace so that the
//! analyzer's verdict is known in advance. Injected events use reserved agent
//! and tool names that never occur in clean plans, so they cannot align with
//! clean events.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlflow::Pattern;
use crate::digest::params_digest;
use crate::perturb::rng::{mix64, SeededDraws};
use crate::perturb::{catalog, PerturbationRecord};
use crate::taxonomy::ManifestationLabel;
use crate::trace::{ArtifactId, Event, Payload, Trace, TraceMeta};

pub const MODEL_ID: &str = "simulator";
pub const SOURCE_ID: &str = "input_0";
pub const DEFAULT_DETOUR_LEN: usize = 6;

const RESERVED_AGENTS: &[&str] = &["validator", "retry_handler", "fallback"];
const RESERVED_TOOLS: &[&str] = &["validator_tool"];
const ENTRY_TYPES: &[&str] = &["table_extract", "summary", "note"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoEffect,
    Silent,
    DetourRecover,
    RerouteFail,
    LoopFail,
    EarlyTerm,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::NoEffect,
        Scenario::Silent,
        Scenario::DetourRecover,
        Scenario::RerouteFail,
        Scenario::LoopFail,
        Scenario::EarlyTerm,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub clean_length: usize,
    pub agents: Vec<String>,
    pub tools: Vec<(String, String)>,
    pub tokens_per_event: u64,
    pub seed: u64,
    /// Where detours and loops are spliced in; seed-chosen when absent.
    #[serde(default)]
    pub injection_at: Option<usize>,
    #[serde(default = "default_detour_len")]
    pub detour_len: usize,
}

fn default_detour_len() -> usize {
    DEFAULT_DETOUR_LEN
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, clean_length: usize, seed: u64) -> Self {
        ScenarioSpec {
            scenario,
            clean_length,
            agents: ["planner", "analyst", "reviewer"].map(String::from).to_vec(),
            tools: [("table_reader", "read"), ("calculator", "compute"), ("web_search", "query")]
                .map(|(t, o)| (t.to_string(), o.to_string()))
                .to_vec(),
            tokens_per_event: 100,
            seed,
            injection_at: None,
            detour_len: DEFAULT_DETOUR_LEN,
        }
    }

    pub fn injected_at(mut self, t: usize) -> Self {
        self.injection_at = Some(t);
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.clean_length < 3 {
            return bad(format!("clean_length must be at least 3, got {}", self.clean_length));
        }
        if self.agents.is_empty() || self.tools.is_empty() {
            return bad("agents and tools must be non-empty".into());
        }
        if self.tokens_per_event == 0 {
            return bad("tokens_per_event must be positive".into());
        }
        if let Some(a) = self.agents.iter().find(|a| RESERVED_AGENTS.contains(&a.as_str())) {
            return bad(format!("agent name `{a}` is reserved"));
        }
        if let Some((t, _)) = self.tools.iter().find(|(t, _)| RESERVED_TOOLS.contains(&t.as_str())) {
            return bad(format!("tool name `{t}` is reserved"));
        }
        if self.detour_len < 2 {
            return bad("detour_len must be at least 2".into());
        }
        if let Some(t) = self.injection_at {
            if t == 0 || t >= self.clean_length {
                return bad(format!("injection_at must be in 1..{}, got {t}", self.clean_length));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: Scenario,
    pub label: ManifestationLabel,
    pub patterns: BTreeSet<Pattern>,
    pub outcome_changed: bool,
    pub injected_insertions: usize,
    pub t_star_raw: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
}

/// A planned event before indices, tokens and provenance are assigned.
#[derive(Debug, Clone)]
struct Step {
    payload: Payload,
    tokens: u64,
}

fn tool_call(tool: &str, op: &str, success: bool, salt: usize) -> Payload {
    Payload::ToolInvocation {
        tool_name: tool.into(),
        operation: op.into(),
        params_digest: params_digest(&format!("{{\"step\":{salt}}}")),
        success,
    }
}

fn route(agent: &str) -> Payload {
    Payload::RoutingDecision { chosen_agent: agent.into() }
}

fn clean_plan(spec: &ScenarioSpec, draws: &mut SeededDraws, answer: &str) -> Vec<Step> {
    let base = spec.tokens_per_event;
    let jitter = |d: &mut SeededDraws| base * 8 / 10 + (d.below(41) as u64 * base) / 100;
    let mut steps = vec![Step { payload: route(&spec.agents[0]), tokens: jitter(draws) }];
    let mut routes = 1;
    let mut mem = 0;
    for k in 0..spec.clean_length - 2 {
        let cycle = k / 5;
        let payload = match k % 5 {
            0 => {
                let (t, o) = &spec.tools[cycle % spec.tools.len()];
                tool_call(t, o, true, k)
            }
            1 => {
                mem += 1;
                Payload::MemoryWrite {
                    entry_id: ArtifactId(format!("mem_{mem}")),
                    entry_type: ENTRY_TYPES[cycle % ENTRY_TYPES.len()].into(),
                }
            }
            2 => {
                routes += 1;
                route(&spec.agents[(routes - 1) % spec.agents.len()])
            }
            3 => Payload::MemoryRead { entry_id: ArtifactId(format!("mem_{mem}")) },
            _ => Payload::AgentOutput { action: format!("analyze_{cycle}"), is_task_outcome: false },
        };
        steps.push(Step { payload, tokens: jitter(draws) });
    }
    steps.push(Step { payload: Payload::TaskOutcome { answer: answer.into() }, tokens: jitter(draws) });
    steps
}

/// Assigns indices, acting agents and a provenance chain rooted at [`SOURCE_ID`].
fn assemble(steps: Vec<Step>, first_agent: &str) -> Vec<Event> {
    let mut agent = first_agent.to_string();
    let mut last = SOURCE_ID.to_string();
    let mut events = Vec::with_capacity(steps.len());
    for (i, step) in steps.into_iter().enumerate() {
        let mut e = Event::new(i, agent.clone(), step.payload.clone()).with_tokens(step.tokens);
        match &step.payload {
            Payload::RoutingDecision { chosen_agent } => agent = chosen_agent.clone(),
            Payload::MemoryWrite { entry_id, .. } => {
                e = e.depends_on([last.clone()]).produces(entry_id.as_str());
                last = entry_id.0.clone();
            }
            Payload::MemoryRead { entry_id } => {
                let id = format!("a{i}");
                e = e.depends_on([entry_id.0.clone()]).produces(id.clone());
                last = id;
            }
            Payload::TaskOutcome { .. } => {
                e = e.depends_on([last.clone()]).produces("answer");
            }
            Payload::AgentHalt { .. } => {
                e = e.depends_on([last.clone()]);
            }
            _ => {
                let id = format!("a{i}");
                e = e.depends_on([last.clone()]).produces(id.clone());
                last = id;
            }
        }
        events.push(e);
    }
    events
}

fn detour_steps(len: usize, base: u64, tool_salt: usize) -> Vec<Step> {
    let cycle = [
        route("validator"),
        tool_call("validator_tool", "validate", true, tool_salt),
        Payload::AgentOutput { action: "flag_inconsistency".into(), is_task_outcome: false },
        route("retry_handler"),
        tool_call("validator_tool", "recompute", true, tool_salt + 1),
        Payload::AgentOutput { action: "confirm".into(), is_task_outcome: false },
    ];
    (0..len).map(|i| Step { payload: cycle[i % cycle.len()].clone(), tokens: base }).collect()
}

fn loop_steps(period: usize, reps: usize, base: u64, tool: &(String, String)) -> Vec<Step> {
    let unit: Vec<Payload> = match period {
        1 => vec![tool_call(&tool.0, &tool.1, false, 0)],
        2 => vec![route("retry_handler"), tool_call(&tool.0, &tool.1, false, 0)],
        _ => vec![
            route("retry_handler"),
            tool_call(&tool.0, &tool.1, false, 0),
            Payload::ToolFailure { tool_name: tool.0.clone(), reason: "parse error".into() },
        ],
    };
    (0..reps).flat_map(|_| unit.iter().cloned()).map(|payload| Step { payload, tokens: base }).collect()
}

fn changed_answer(answer: &str) -> String {
    format!("{answer} (revised)")
}

pub fn generate_pair(spec: &ScenarioSpec, task_id: &str) -> Result<(Trace, Trace, GroundTruth), SimError> {
    spec.validate()?;
    let mut draws = SeededDraws::new(spec.seed);
    let l = spec.clean_length;
    let answer = format!("value {}", 100 + draws.below(9900));
    let clean_steps = clean_plan(spec, &mut draws, &answer);
    let base = spec.tokens_per_event;
    let inject_at = |d: &mut SeededDraws| spec.injection_at.unwrap_or_else(|| 1 + d.below(l - 1));

    let mut pert = clean_steps.clone();
    let mut truth = GroundTruth {
        scenario: spec.scenario,
        label: ManifestationLabel::NoEffect,
        patterns: BTreeSet::new(),
        outcome_changed: false,
        injected_insertions: 0,
        t_star_raw: None,
    };
    let set_answer = |steps: &mut Vec<Step>, a: String| {
        if let Some(last) = steps.last_mut() {
            last.payload = Payload::TaskOutcome { answer: a };
        }
    };
    match spec.scenario {
        Scenario::NoEffect => {}
        Scenario::Silent => {
            set_answer(&mut pert, changed_answer(&answer));
            truth.label = ManifestationLabel::SilentSemanticCorruption;
            truth.outcome_changed = true;
        }
        Scenario::DetourRecover => {
            let t = inject_at(&mut draws);
            pert.splice(t..t, detour_steps(spec.detour_len, base, l));
            truth.label = ManifestationLabel::BehavioralDetourWithRecovery;
            truth.patterns.insert(Pattern::ExtendedExecution);
            truth.injected_insertions = spec.detour_len;
            truth.t_star_raw = Some(t);
        }
        Scenario::RerouteFail => {
            let routes: Vec<usize> = (0..l)
                .filter(|&i| matches!(clean_steps[i].payload, Payload::RoutingDecision { .. }))
                .collect();
            let n = l.div_ceil(10).min(routes.len());
            let chosen: Vec<usize> = draws.sample(routes.len(), n).into_iter().map(|i| routes[i]).collect();
            for &i in &chosen {
                pert[i].payload = route("fallback");
            }
            set_answer(&mut pert, changed_answer(&answer));
            truth.label = ManifestationLabel::CombinedDisruption;
            truth.patterns.insert(Pattern::Rerouting);
            truth.outcome_changed = true;
            truth.t_star_raw = chosen.iter().min().copied();
        }
        Scenario::LoopFail => {
            let t = inject_at(&mut draws);
            let period = 1 + draws.below(3);
            let reps = 2 + draws.below(3);
            let tool = &spec.tools[draws.below(spec.tools.len())];
            pert.splice(t..t, loop_steps(period, reps, base, tool));
            set_answer(&mut pert, changed_answer(&answer));
            truth.label = ManifestationLabel::CombinedDisruption;
            truth.patterns.extend([Pattern::Looping, Pattern::ExtendedExecution]);
            truth.outcome_changed = true;
            truth.injected_insertions = period * reps;
            truth.t_star_raw = Some(t);
        }
        Scenario::EarlyTerm => {
            let max_cut = (l * 6 / 10).max(1);
            let cut = 1 + draws.below(max_cut);
            pert.truncate(cut);
            pert.push(Step { payload: Payload::AgentHalt { reason: "early_stop".into() }, tokens: base / 4 + 1 });
            truth.label = ManifestationLabel::CombinedDisruption;
            truth.patterns.insert(Pattern::EarlyTermination);
            truth.outcome_changed = true;
            truth.t_star_raw = Some(cut);
        }
    }

    let op = &catalog()[draws.below(catalog().len())];
    let mut record = PerturbationRecord::new(op.name, op.modality, spec.seed).with_affected_ids([SOURCE_ID]);
    record.params = op.default_params();
    record.locus = vec![SOURCE_ID.to_string()];

    let first = spec.agents[0].as_str();
    let clean = Trace::new(TraceMeta::clean(task_id, MODEL_ID, spec.seed), assemble(clean_steps, first));
    let perturbed =
        Trace::new(TraceMeta::perturbed(task_id, MODEL_ID, spec.seed, record), assemble(pert, first));
    Ok((clean, perturbed, truth))
}

/// One generated pair with its identity.
#[derive(Debug, Clone)]
pub struct GeneratedPair {
    pub task_id: String,
    pub clean: Trace,
    pub perturbed: Trace,
    pub truth: GroundTruth,
}

/// `count_per_scenario` pairs of each scenario, interleaved so task `i` has
/// scenario `i mod 6`. Seeds and clean lengths (3..=12) derive from `base_seed`
/// and the task index.
pub fn generate_corpus(count_per_scenario: usize, base_seed: u64) -> Vec<GeneratedPair> {
    let n = count_per_scenario * Scenario::ALL.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d = SeededDraws::stream(base_seed, i as u64);
            let seed = mix64(d.next_u64());
            let len = 3 + d.below(10);
            let spec = ScenarioSpec::new(Scenario::ALL[i % Scenario::ALL.len()], len, seed);
            let task_id = format!("task_{i}");
            let (clean, perturbed, truth) = generate_pair(&spec, &task_id).expect("built-in spec is valid");
            GeneratedPair { task_id, clean, perturbed, truth }
        })
        .collect()
}
