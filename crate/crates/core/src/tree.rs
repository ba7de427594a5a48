//! The parse-state tree: expansion, node scoring, max backup, and
//! extraction of the optimal parse.
//!
//! Each node holds an ordered set of candidate utterances. A child replaces
//! exactly one candidate of its parent by the fragments of one split point.
//! States reachable through different split orders are stored once, so the
//! structure is a DAG laid out in breadth-first order: every child has a
//! larger [`NodeId`] than each of its parents.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::Binding;
use crate::error::{Error, Result};
use crate::eval::normalize_with;
use crate::splitter::{find_split_points, SplitConfig, SplitPoint, Utterance};

pub type NodeId = usize;

pub const DEFAULT_MAX_DEPTH: usize = 3;

/// How per-candidate confidences are aggregated into a node score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// Mean of the best confidence per candidate.
    #[default]
    Average,
    /// Product of the best confidence per candidate.
    Joint,
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" | "avg" => Ok(ScoringMode::Average),
            "joint" => Ok(ScoringMode::Joint),
            other => Err(Error::InvalidConfig(format!(
                "unknown scoring mode {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoringMode::Average => "average",
            ScoringMode::Joint => "joint",
        })
    }
}

impl ScoringMode {
    pub fn aggregate(self, confidences: &[f64]) -> f64 {
        match self {
            ScoringMode::Average => confidences.iter().sum::<f64>() / confidences.len() as f64,
            ScoringMode::Joint => confidences.iter().product(),
        }
    }
}

/// One candidate utterance of a parse state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub utterance: Utterance,
    /// Token index in the root utterance that fixes execution order.
    pub position: usize,
    /// Root token index for each token of `utterance`.
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildEdge {
    /// Index of the candidate the split was applied to.
    pub candidate: usize,
    pub split: SplitPoint,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseNode {
    pub candidates: Vec<Candidate>,
    pub children: Vec<ChildEdge>,
    /// Number of splits applied since the root.
    pub depth: usize,
    pub eval_score: Option<f64>,
    pub backed_up_score: Option<f64>,
    pub bindings: Vec<Option<Binding>>,
}

impl ParseNode {
    fn new(candidates: Vec<Candidate>, depth: usize) -> Self {
        let bindings = vec![None; candidates.len()];
        ParseNode {
            candidates,
            children: Vec::new(),
            depth,
            eval_score: None,
            backed_up_score: None,
            bindings,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.candidates
            .iter()
            .map(|c| c.utterance.text.as_str())
            .collect()
    }
}

/// Aggregates the node's bindings and stores the result as its eval score.
pub fn score_node(node: &mut ParseNode, mode: ScoringMode) -> Result<f64> {
    let confidences = node
        .bindings
        .iter()
        .zip(&node.candidates)
        .map(|(b, c)| {
            b.as_ref().map(|b| b.confidence).ok_or_else(|| {
                Error::Tree(format!("candidate {:?} has no binding", c.utterance.text))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let score = mode.aggregate(&confidences);
    node.eval_score = Some(score);
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFragment {
    pub utterance: Utterance,
    pub agent: String,
    pub intent: String,
    pub confidence: f64,
    pub position: usize,
}

/// The optimal parse: fragments in text order with their bound agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub fragments: Vec<OutcomeFragment>,
    pub score: f64,
    pub depth: usize,
    pub node: NodeId,
}

impl ParseOutcome {
    pub fn texts(&self) -> Vec<&str> {
        self.fragments
            .iter()
            .map(|f| f.utterance.text.as_str())
            .collect()
    }

    pub fn intents(&self) -> Vec<&str> {
        self.fragments.iter().map(|f| f.intent.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseTree {
    nodes: Vec<ParseNode>,
    split_config: SplitConfig,
}

pub fn build_tree(u: &Utterance, cfg: &SplitConfig, max_depth: usize) -> Result<ParseTree> {
    ParseTree::build(u, cfg, max_depth)
}

impl ParseTree {
    /// Expands every split of every candidate, breadth first, up to
    /// `max_depth` splits along any path.
    pub fn build(u: &Utterance, cfg: &SplitConfig, max_depth: usize) -> Result<Self> {
        if max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if u.word_count() == 0 {
            return Err(Error::Tree("cannot parse a blank utterance".into()));
        }
        let marks = &cfg.punctuation_marks;
        let root = Candidate {
            utterance: u.clone(),
            position: u.tokens.iter().position(|t| t.is_word()).unwrap_or(0),
            sources: (0..u.tokens.len()).collect(),
        };
        let state_key = |cands: &[Candidate]| -> Vec<String> {
            cands
                .iter()
                .map(|c| normalize_with(&c.utterance.text, marks))
                .collect()
        };

        let mut nodes = vec![ParseNode::new(vec![root], 0)];
        let mut seen: HashMap<Vec<String>, NodeId> = HashMap::new();
        seen.insert(state_key(&nodes[0].candidates), 0);
        let mut splits_of: HashMap<String, Vec<SplitPoint>> = HashMap::new();

        let mut next = 0;
        while next < nodes.len() {
            let depth = nodes[next].depth;
            if depth >= max_depth {
                next += 1;
                continue;
            }
            let parent = nodes[next].candidates.clone();
            let mut edges = Vec::new();
            for (ci, cand) in parent.iter().enumerate() {
                let splits = splits_of
                    .entry(cand.utterance.text.clone())
                    .or_insert_with(|| find_split_points(&cand.utterance, cfg));
                for sp in splits.iter() {
                    let mut cands = Vec::with_capacity(parent.len() + sp.fragments.len() - 1);
                    cands.extend_from_slice(&parent[..ci]);
                    for (k, frag) in sp.fragments.iter().enumerate() {
                        cands.push(Candidate {
                            utterance: frag.clone(),
                            position: cand.sources[sp.fragment_starts[k]],
                            sources: sp.fragment_sources[k]
                                .iter()
                                .map(|&i| cand.sources[i])
                                .collect(),
                        });
                    }
                    cands.extend_from_slice(&parent[ci + 1..]);
                    let key = state_key(&cands);
                    let id = *seen.entry(key).or_insert_with(|| {
                        nodes.push(ParseNode::new(cands, depth + 1));
                        nodes.len() - 1
                    });
                    edges.push(ChildEdge {
                        candidate: ci,
                        split: sp.clone(),
                        node: id,
                    });
                }
            }
            nodes[next].children = edges;
            next += 1;
        }
        Ok(ParseTree {
            nodes,
            split_config: cfg.clone(),
        })
    }

    pub fn root(&self) -> &ParseNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &ParseNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[ParseNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every distinct candidate utterance across all states, first
    /// occurrence order, deduplicated by normalized text.
    pub fn distinct_candidates(&self) -> Vec<&Utterance> {
        let marks = &self.split_config.punctuation_marks;
        let mut seen = std::collections::HashSet::new();
        self.nodes
            .iter()
            .flat_map(|n| n.candidates.iter())
            .filter(|c| seen.insert(normalize_with(&c.utterance.text, marks)))
            .map(|c| &c.utterance)
            .collect()
    }

    /// Binds every candidate of every node through `bind`, which is called
    /// once per candidate occurrence.
    pub fn attach_bindings<F>(&mut self, mut bind: F) -> Result<()>
    where
        F: FnMut(&Utterance) -> Result<Binding>,
    {
        for node in &mut self.nodes {
            for (slot, cand) in node.bindings.iter_mut().zip(&node.candidates) {
                *slot = Some(bind(&cand.utterance)?);
            }
        }
        Ok(())
    }

    pub fn score(&mut self, mode: ScoringMode) -> Result<()> {
        for node in &mut self.nodes {
            score_node(node, mode)?;
        }
        Ok(())
    }

    /// Sets each node's backed-up score to the max of its own eval score
    /// and its children's backed-up scores. Returns the root's value.
    pub fn backup(&mut self) -> Result<f64> {
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            let mut best = node
                .eval_score
                .ok_or_else(|| Error::Tree(format!("node {id} has not been scored")))?;
            for edge in &node.children {
                debug_assert!(edge.node > id);
                let child = self.nodes[edge.node]
                    .backed_up_score
                    .ok_or_else(|| Error::Tree(format!("node {} not backed up", edge.node)))?;
                best = best.max(child);
            }
            self.nodes[id].backed_up_score = Some(best);
        }
        Ok(self.nodes[0].backed_up_score.expect("root backed up"))
    }

    /// The shallowest node whose eval score equals the root's backed-up
    /// score; ties go to fewer candidates, then breadth-first order.
    pub fn optimal_node(&self) -> Result<NodeId> {
        let target = self.nodes[0]
            .backed_up_score
            .ok_or_else(|| Error::Tree("backup has not been run".into()))?;
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.eval_score == Some(target))
            .min_by_key(|(id, n)| (n.depth, n.candidates.len(), *id))
            .map(|(id, _)| id)
            .ok_or_else(|| Error::Tree("no node attains the backed-up score".into()))
    }

    pub fn optimal_parse(&self) -> Result<ParseOutcome> {
        let id = self.optimal_node()?;
        let node = &self.nodes[id];
        let mut fragments = node
            .candidates
            .iter()
            .zip(&node.bindings)
            .map(|(c, b)| {
                let b = b
                    .as_ref()
                    .ok_or_else(|| Error::Tree("unbound candidate".into()))?;
                Ok(OutcomeFragment {
                    utterance: c.utterance.clone(),
                    agent: b.agent.clone(),
                    intent: b.intent.clone(),
                    confidence: b.confidence,
                    position: c.position,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        fragments.sort_by_key(|f| f.position);
        Ok(ParseOutcome {
            fragments,
            score: node.eval_score.expect("optimal node is scored"),
            depth: node.depth,
            node: id,
        })
    }

    /// Nodes from the root down to the optimal node.
    pub fn optimal_path(&self) -> Result<Vec<NodeId>> {
        let target = self.optimal_node()?;
        let mut parent: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            for edge in &node.children {
                parent[edge.node].get_or_insert(id);
            }
        }
        let mut path = vec![target];
        while let Some(p) = parent[*path.last().unwrap()] {
            path.push(p);
        }
        path.reverse();
        Ok(path)
    }

    /// Human-readable dump of every state with its scores and the chosen path.
    pub fn explain(&self) -> String {
        let path = self.optimal_path().unwrap_or_default();
        let chosen = path.last().copied();
        let fmt_score = |s: Option<f64>| s.map_or_else(|| "-".to_string(), |s| format!("{s:.4}"));
        let mut out = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let marker = if Some(id) == chosen {
                " <= optimal"
            } else if path.contains(&id) {
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:indent$}node {id} depth={} eval={} backed={}{marker}",
                "",
                node.depth,
                fmt_score(node.eval_score),
                fmt_score(node.backed_up_score),
                indent = node.depth * 2,
            );
            for (cand, binding) in node.candidates.iter().zip(&node.bindings) {
                let bound = match binding {
                    Some(b) => format!("{} ({:.4})", b.agent, b.confidence),
                    None => "unbound".to_string(),
                };
                let _ = writeln!(
                    out,
                    "{:indent$}  {:?} -> {bound}",
                    "",
                    cand.utterance.text,
                    indent = node.depth * 2,
                );
            }
            for edge in &node.children {
                let _ = writeln!(
                    out,
                    "{:indent$}  split #{} {} at {:?} -> node {}",
                    "",
                    edge.candidate,
                    edge.split.kind,
                    edge.split.anchor_indices,
                    edge.node,
                    indent = node.depth * 2,
                );
            }
        }
        out
    }
}
