use std::fmt::Write;

use serde::Serialize;
use splitroute_core::pipeline::{AgentResponse, EventOutcome, PlanRecord, RouteStatus, Routing};
use splitroute_core::ScoringMode;

/// Rounds to four decimals and drops trailing zeros: 0.945, 0.8924.
pub fn score(x: f64) -> String {
    format!("{}", (x * 1e4).round() / 1e4)
}

#[derive(Debug, Serialize)]
pub struct FragmentRecord {
    pub fragment: String,
    pub agent: String,
    pub intent: String,
    pub confidence: f64,
}

#[derive(Debug, Serialize)]
pub struct ParseReport {
    pub text: String,
    pub mode: ScoringMode,
    pub score: f64,
    pub depth: usize,
    pub status: RouteStatus,
    pub fragments: Vec<FragmentRecord>,
    pub plan: Vec<PlanRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<String>,
}

impl ParseReport {
    pub fn new(text: &str, mode: ScoringMode, routing: &Routing, explain: bool) -> Self {
        let outcome = &routing.plan.provenance;
        ParseReport {
            text: text.to_string(),
            mode,
            score: outcome.score,
            depth: outcome.depth,
            status: routing.status,
            fragments: outcome
                .fragments
                .iter()
                .map(|f| FragmentRecord {
                    fragment: f.utterance.text.clone(),
                    agent: f.agent.clone(),
                    intent: f.intent.clone(),
                    confidence: f.confidence,
                })
                .collect(),
            plan: routing
                .plan
                .entries
                .iter()
                .map(|e| PlanRecord {
                    agent: e.agent.clone(),
                    fragment: e.fragment.text.clone(),
                    confidence: e.confidence,
                })
                .collect(),
            tree: explain.then(|| routing.tree.explain()),
        }
    }

    pub fn human(&self, delta: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.text);
        for (i, f) in self.fragments.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {}. {:<40} -> {} [{}] {}",
                i + 1,
                f.fragment,
                f.agent,
                f.intent,
                score(f.confidence)
            );
        }
        let splits = if self.depth == 1 { "split" } else { "splits" };
        let _ = writeln!(
            out,
            "score {} ({}), {} {}",
            score(self.score),
            self.mode,
            self.depth,
            splits
        );
        let _ = writeln!(out, "{}", plan_line(&self.plan, delta));
        if let Some(tree) = &self.tree {
            let _ = write!(out, "\n{tree}");
        }
        out
    }
}

fn plan_line(plan: &[PlanRecord], delta: f64) -> String {
    if plan.is_empty() {
        return format!("plan: no agent reached delta {}", score(delta));
    }
    let agents: Vec<&str> = plan.iter().map(|p| p.agent.as_str()).collect();
    format!("plan: {}", agents.join(" -> "))
}

/// Chat output for one event: the plan followed by each response.
pub fn event_human(outcome: &EventOutcome, delta: f64) -> String {
    let mut out = String::new();
    let plan = outcome.plan();
    if plan.entries.is_empty() {
        let _ = writeln!(
            out,
            "no agent can handle that (best score {}, delta {})",
            score(plan.provenance.score),
            score(delta)
        );
        return out;
    }
    for (i, e) in plan.entries.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {}. {} -> {} ({})",
            i + 1,
            e.fragment.text,
            e.agent,
            score(e.confidence)
        );
    }
    for AgentResponse {
        agent,
        response,
        fault,
        ..
    } in &outcome.responses
    {
        match (response, fault) {
            (Some(r), _) => {
                let _ = writeln!(out, "{r}");
            }
            (None, Some(f)) => {
                let _ = writeln!(out, "! {agent} failed: {f}");
            }
            (None, None) => {
                let _ = writeln!(out, "! {agent} returned nothing");
            }
        }
    }
    out
}
