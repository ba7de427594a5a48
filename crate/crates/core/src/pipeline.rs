//! Evaluate-and-execute flow: parse, broadcast, score, back up, select,
//! sequence, execute.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentFault, Broadcaster, EvaluationResult, Registry};
use crate::error::{Error, Result};
use crate::splitter::{SplitConfig, Utterance};
use crate::tree::{ParseOutcome, ParseTree, ScoringMode, DEFAULT_MAX_DEPTH};

pub const DEFAULT_DELTA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Selection threshold: minimum confidence for an agent to execute.
    pub delta: f64,
    pub mode: ScoringMode,
    pub max_depth: usize,
    pub split: SplitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            delta: DEFAULT_DELTA,
            mode: ScoringMode::Average,
            max_depth: DEFAULT_MAX_DEPTH,
            split: SplitConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!(
                "delta must be in [0, 1], got {}",
                self.delta
            )));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        self.split.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub agent: String,
    pub intent: String,
    pub fragment: Utterance,
    pub confidence: f64,
    /// Token index of the fragment in the original utterance.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub entries: Vec<PlanEntry>,
    pub provenance: ParseOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteStatus {
    Routed,
    NoCapableAgent,
}

/// Pluggable pipeline stages. The defaults pass confidences through, keep
/// bindings at or above the threshold, and order by text position.
#[derive(Debug, Clone, Copy)]
pub struct Stages {
    pub scorer: fn(&EvaluationResult) -> f64,
    pub selector: fn(Vec<PlanEntry>, f64) -> Vec<PlanEntry>,
    pub sequencer: fn(Vec<PlanEntry>) -> Vec<PlanEntry>,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            scorer: default_scorer,
            selector: default_selector,
            sequencer: default_sequencer,
        }
    }
}

pub fn default_scorer(p: &EvaluationResult) -> f64 {
    p.confidence
}

pub fn default_selector(bindings: Vec<PlanEntry>, delta: f64) -> Vec<PlanEntry> {
    bindings
        .into_iter()
        .filter(|e| e.confidence >= delta)
        .collect()
}

pub fn default_sequencer(mut selected: Vec<PlanEntry>) -> Vec<PlanEntry> {
    selected.sort_by_key(|e| e.position);
    selected
}

/// Result of the parse-and-select half of an event.
#[derive(Debug)]
pub struct Routing {
    pub plan: ExecutionPlan,
    pub status: RouteStatus,
    pub tree: ParseTree,
    /// Agent previews issued during the broadcast.
    pub previews: usize,
}

pub fn route(text: &str, registry: &Registry, cfg: &PipelineConfig) -> Result<Routing> {
    route_with(text, registry, cfg, &Stages::default())
}

pub fn route_with(
    text: &str,
    registry: &Registry,
    cfg: &PipelineConfig,
    stages: &Stages,
) -> Result<Routing> {
    let mut broadcaster = Broadcaster::with_scorer(registry, stages.scorer)?;
    let utterance = cfg.split.utterance(text);
    let mut tree = ParseTree::build(&utterance, &cfg.split, cfg.max_depth)?;
    tree.attach_bindings(|u| Ok(broadcaster.bind(u)))?;
    tree.score(cfg.mode)?;
    tree.backup()?;
    let outcome = tree.optimal_parse()?;

    let bindings = outcome
        .fragments
        .iter()
        .map(|f| PlanEntry {
            agent: f.agent.clone(),
            intent: f.intent.clone(),
            fragment: f.utterance.clone(),
            confidence: f.confidence,
            position: f.position,
        })
        .collect();
    let entries = (stages.sequencer)((stages.selector)(bindings, cfg.delta));
    let status = if entries.is_empty() {
        RouteStatus::NoCapableAgent
    } else {
        RouteStatus::Routed
    };
    Ok(Routing {
        plan: ExecutionPlan {
            entries,
            provenance: outcome,
        },
        status,
        tree,
        previews: broadcaster.preview_count(),
    })
}

/// Performs the action behind an agent.
pub trait Executor {
    fn execute(&mut self, entry: &PlanEntry) -> std::result::Result<String, AgentFault>;
}

/// Reference executor: replies `"{agent} handled: {fragment}"`.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoExecutor;

impl Executor for EchoExecutor {
    fn execute(&mut self, entry: &PlanEntry) -> std::result::Result<String, AgentFault> {
        Ok(format!("{} handled: {}", entry.agent, entry.fragment.text))
    }
}

impl<F> Executor for F
where
    F: FnMut(&PlanEntry) -> std::result::Result<String, AgentFault>,
{
    fn execute(&mut self, entry: &PlanEntry) -> std::result::Result<String, AgentFault> {
        self(entry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent: String,
    pub fragment: String,
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug)]
pub struct EventOutcome {
    pub routing: Routing,
    pub responses: Vec<AgentResponse>,
    /// Parse, broadcast, backup, and selection time, excluding execution.
    pub parse_elapsed: Duration,
}

impl EventOutcome {
    pub fn plan(&self) -> &ExecutionPlan {
        &self.routing.plan
    }

    pub fn status(&self) -> RouteStatus {
        self.routing.status
    }
}

/// One parse-select-execute cycle for a single event.
pub fn handle_event(
    text: &str,
    registry: &Registry,
    cfg: &PipelineConfig,
    executor: &mut dyn Executor,
) -> Result<EventOutcome> {
    handle_event_with(text, registry, cfg, &Stages::default(), executor)
}

pub fn handle_event_with(
    text: &str,
    registry: &Registry,
    cfg: &PipelineConfig,
    stages: &Stages,
    executor: &mut dyn Executor,
) -> Result<EventOutcome> {
    let start = Instant::now();
    let routing = route_with(text, registry, cfg, stages)?;
    let parse_elapsed = start.elapsed();
    let responses = routing
        .plan
        .entries
        .iter()
        .map(|entry| {
            let (response, fault) = match executor.execute(entry) {
                Ok(r) => (Some(r), None),
                Err(f) => (None, Some(f.to_string())),
            };
            AgentResponse {
                agent: entry.agent.clone(),
                fragment: entry.fragment.text.clone(),
                response,
                fault,
            }
        })
        .collect();
    Ok(EventOutcome {
        routing,
        responses,
        parse_elapsed,
    })
}

/// Batch-mode request record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub agent: String,
    pub fragment: String,
    pub confidence: f64,
}

/// Batch-mode response record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub text: String,
    pub status: RouteStatus,
    pub plan: Vec<PlanRecord>,
    pub responses: Vec<AgentResponse>,
    pub parse_score: f64,
    /// Optimal parse fragments before threshold selection.
    pub parse: Vec<PlanRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl EventRecord {
    pub fn new(text: &str, outcome: &EventOutcome, with_timing: bool) -> Self {
        let plan = outcome.plan();
        EventRecord {
            text: text.to_string(),
            status: outcome.status(),
            plan: plan
                .entries
                .iter()
                .map(|e| PlanRecord {
                    agent: e.agent.clone(),
                    fragment: e.fragment.text.clone(),
                    confidence: e.confidence,
                })
                .collect(),
            responses: outcome.responses.clone(),
            parse_score: plan.provenance.score,
            parse: plan
                .provenance
                .fragments
                .iter()
                .map(|f| PlanRecord {
                    agent: f.agent.clone(),
                    fragment: f.utterance.text.clone(),
                    confidence: f.confidence,
                })
                .collect(),
            elapsed_ms: with_timing.then_some(outcome.parse_elapsed.as_secs_f64() * 1e3),
        }
    }
}
