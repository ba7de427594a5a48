//! Agents, the agent registry, and the broadcast step.
//!
//! Every agent is an independent evaluator that reports a confidence in
//! [0, 1] that it can handle an utterance. The broadcast sends a fragment to
//! every registered agent and binds it to the most confident one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::normalize_for_comparison;
use crate::splitter::Utterance;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub id: String,
    pub intent: String,
    pub has_preview: bool,
}

impl AgentDescriptor {
    pub fn new(id: impl Into<String>, intent: impl Into<String>) -> Self {
        AgentDescriptor {
            id: id.into(),
            intent: intent.into(),
            has_preview: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub agent: String,
    pub confidence: f64,
}

/// A fragment bound to its most confident agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub agent: String,
    pub intent: String,
    pub confidence: f64,
}

/// Raised by an agent whose scorer misbehaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentFault(pub String);

impl fmt::Display for AgentFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AgentFault {}

/// An independently built unit of automation with its own language
/// understanding.
///
/// `evaluate` must be a pure function of the agent's (trained) state and the
/// utterance.
pub trait Agent: Send + Sync {
    fn descriptor(&self) -> &AgentDescriptor;

    fn evaluate(&self, utterance: &Utterance) -> std::result::Result<f64, AgentFault>;
}

/// Asks `agent` for its confidence on `u`.
///
/// Agents without a preview score 0. Faults and values outside [0, 1] are
/// logged and also score 0.
pub fn preview(agent: &dyn Agent, u: &Utterance) -> EvaluationResult {
    let desc = agent.descriptor();
    let confidence = if !desc.has_preview {
        0.0
    } else {
        match agent.evaluate(u) {
            Ok(c) if (0.0..=1.0).contains(&c) => c,
            Ok(c) => {
                warn!(
                    "agent {} returned out-of-range confidence {c} for {:?}",
                    desc.id, u.text
                );
                0.0
            }
            Err(fault) => {
                warn!("agent {} faulted on {:?}: {fault}", desc.id, u.text);
                0.0
            }
        }
    };
    EvaluationResult {
        agent: desc.id.clone(),
        confidence,
    }
}

/// Scores every fragment to a fixed table of confidences, keyed by
/// normalized text. Used for tests and scripted demos.
#[derive(Debug, Clone)]
pub struct StubAgent {
    desc: AgentDescriptor,
    fixed: HashMap<String, f64>,
    default: f64,
}

impl StubAgent {
    pub fn new(id: impl Into<String>, intent: impl Into<String>) -> Self {
        StubAgent {
            desc: AgentDescriptor::new(id, intent),
            fixed: HashMap::new(),
            default: 0.0,
        }
    }

    pub fn with_score(mut self, fragment: &str, confidence: f64) -> Self {
        self.fixed
            .insert(normalize_for_comparison(fragment), confidence);
        self
    }

    pub fn with_default(mut self, confidence: f64) -> Self {
        self.default = confidence;
        self
    }

    pub fn without_preview(mut self) -> Self {
        self.desc.has_preview = false;
        self
    }
}

impl Agent for StubAgent {
    fn descriptor(&self) -> &AgentDescriptor {
        &self.desc
    }

    fn evaluate(&self, u: &Utterance) -> std::result::Result<f64, AgentFault> {
        let key = normalize_for_comparison(&u.text);
        Ok(self.fixed.get(&key).copied().unwrap_or(self.default))
    }
}

/// Counts keyword hits: `min(1, hits * weight_per_hit)`.
#[derive(Debug, Clone)]
pub struct KeywordAgent {
    desc: AgentDescriptor,
    keywords: BTreeSet<String>,
    weight_per_hit: f64,
}

impl KeywordAgent {
    pub fn new<I, S>(
        id: impl Into<String>,
        intent: impl Into<String>,
        keywords: I,
        weight_per_hit: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !(weight_per_hit.is_finite() && weight_per_hit >= 0.0) {
            return Err(Error::Agent(format!(
                "invalid weight_per_hit {weight_per_hit}"
            )));
        }
        Ok(KeywordAgent {
            desc: AgentDescriptor::new(id, intent),
            keywords: keywords
                .into_iter()
                .map(|k| k.as_ref().to_lowercase())
                .collect(),
            weight_per_hit,
        })
    }
}

impl Agent for KeywordAgent {
    fn descriptor(&self) -> &AgentDescriptor {
        &self.desc
    }

    fn evaluate(&self, u: &Utterance) -> std::result::Result<f64, AgentFault> {
        let hits = u
            .words()
            .filter(|t| self.keywords.contains(&t.surface.to_lowercase()))
            .count();
        Ok((hits as f64 * self.weight_per_hit).min(1.0))
    }
}

/// Smoothing constant used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Multinomial bag-of-words model with additive smoothing.
///
/// `P(w | c) = (count(w, c) + alpha) / (total(c) + alpha * |V|)`, priors are
/// document frequencies, and tokens outside the vocabulary are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentModel {
    pub intents: Vec<String>,
    pub vocabulary: BTreeMap<String, usize>,
    /// `log_weights[intent][token]`
    pub log_weights: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub alpha: f64,
}

/// Lowercased word tokens of `text`, as used for training and scoring.
fn bag(u: &Utterance) -> impl Iterator<Item = String> + '_ {
    u.words().map(|t| t.surface.to_lowercase())
}

pub fn train_intent_model<S: AsRef<str>>(
    examples: &[(S, S)],
    intents: &[S],
    alpha: f64,
) -> Result<IntentModel> {
    IntentModel::train(examples, intents, alpha)
}

impl IntentModel {
    /// Trains on `(text, intent)` pairs. Every example's intent must be in
    /// `intents`, and every intent needs at least one example.
    pub fn train<S: AsRef<str>>(examples: &[(S, S)], intents: &[S], alpha: f64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Agent("no training examples".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Agent(format!(
                "smoothing constant must be > 0, got {alpha}"
            )));
        }
        let mut labels: Vec<String> = Vec::new();
        for intent in intents {
            let intent = intent.as_ref().to_string();
            if !labels.contains(&intent) {
                labels.push(intent);
            }
        }
        labels.sort();
        let marks = crate::splitter::default_marks();
        let mut vocabulary = BTreeMap::new();
        let mut docs: Vec<(usize, Vec<String>)> = Vec::with_capacity(examples.len());
        for (text, intent) in examples {
            let label = labels
                .binary_search_by(|l| l.as_str().cmp(intent.as_ref()))
                .map_err(|_| {
                    Error::Agent(format!(
                        "example has undeclared intent {:?}",
                        intent.as_ref()
                    ))
                })?;
            let u = Utterance::new(text.as_ref(), &marks);
            let words: Vec<String> = bag(&u).collect();
            docs.push((label, words));
        }
        for (_, words) in &docs {
            for w in words {
                let next = vocabulary.len();
                vocabulary.entry(w.clone()).or_insert(next);
            }
        }
        // BTreeMap insertion order is not index order; renumber alphabetically
        for (i, idx) in vocabulary.values_mut().enumerate() {
            *idx = i;
        }

        let n_intents = labels.len();
        let mut doc_counts = vec![0usize; n_intents];
        let mut counts = vec![vec![0usize; vocabulary.len()]; n_intents];
        for (label, words) in &docs {
            doc_counts[*label] += 1;
            for w in words {
                counts[*label][vocabulary[w]] += 1;
            }
        }
        if let Some(missing) = doc_counts.iter().position(|&c| c == 0) {
            return Err(Error::Agent(format!(
                "intent {:?} has no examples",
                labels[missing]
            )));
        }
        let v = vocabulary.len() as f64;
        let log_weights = counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                let denom = total as f64 + alpha * v;
                row.iter()
                    .map(|&c| ((c as f64 + alpha) / denom).ln())
                    .collect()
            })
            .collect();
        let n_docs = docs.len() as f64;
        let priors = doc_counts.iter().map(|&c| c as f64 / n_docs).collect();
        Ok(IntentModel {
            intents: labels,
            vocabulary,
            log_weights,
            priors,
            alpha,
        })
    }

    pub fn intent_index(&self, intent: &str) -> Option<usize> {
        self.intents.iter().position(|i| i == intent)
    }

    /// Posterior over intents given the utterance's in-vocabulary tokens.
    pub fn posterior(&self, u: &Utterance) -> Vec<f64> {
        let mut logp: Vec<f64> = self.priors.iter().map(|p| p.ln()).collect();
        for w in bag(u) {
            if let Some(&idx) = self.vocabulary.get(&w) {
                for (lp, weights) in logp.iter_mut().zip(&self.log_weights) {
                    *lp += weights[idx];
                }
            }
        }
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logp.iter().map(|lp| (lp - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path.display().to_string(), e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::format(path.display().to_string(), e))
    }
}

/// An agent specialized to one intent of a jointly trained [`IntentModel`];
/// its confidence is that intent's posterior.
#[derive(Debug, Clone)]
pub struct IntentAgent {
    desc: AgentDescriptor,
    model: Arc<IntentModel>,
    index: usize,
}

impl IntentAgent {
    pub fn new(id: impl Into<String>, intent: &str, model: Arc<IntentModel>) -> Result<Self> {
        let index = model
            .intent_index(intent)
            .ok_or_else(|| Error::Agent(format!("model has no intent {intent:?}")))?;
        Ok(IntentAgent {
            desc: AgentDescriptor::new(id, intent),
            model,
            index,
        })
    }
}

impl Agent for IntentAgent {
    fn descriptor(&self) -> &AgentDescriptor {
        &self.desc
    }

    fn evaluate(&self, u: &Utterance) -> std::result::Result<f64, AgentFault> {
        let p = self.model.posterior(u)[self.index];
        if p.is_finite() {
            Ok(p)
        } else {
            Err(AgentFault(format!(
                "non-finite posterior for intent {}",
                self.desc.intent
            )))
        }
    }
}

#[derive(Default)]
pub struct Registry {
    agents: Vec<Box<dyn Agent>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.agents.iter().map(|a| a.descriptor()))
            .finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, agent: impl Agent + 'static) -> Result<()> {
        self.register_boxed(Box::new(agent))
    }

    pub fn register_boxed(&mut self, agent: Box<dyn Agent>) -> Result<()> {
        let id = &agent.descriptor().id;
        if self.get(id).is_some() {
            return Err(Error::Agent(format!("duplicate agent id {id:?}")));
        }
        self.agents.push(agent);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&dyn Agent> {
        self.agents
            .iter()
            .find(|a| a.descriptor().id == id)
            .map(|a| a.as_ref())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &AgentDescriptor> {
        self.agents.iter().map(|a| a.descriptor())
    }

    pub fn agents(&self) -> impl Iterator<Item = &dyn Agent> {
        self.agents.iter().map(|a| a.as_ref())
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Builds a registry from agent definition records. All example-based
    /// agents are trained jointly into one model.
    pub fn from_definitions(defs: &[AgentDefinition], alpha: f64) -> Result<Self> {
        let mut examples: Vec<(String, String)> = Vec::new();
        let mut intents: Vec<String> = Vec::new();
        for def in defs {
            if let AgentSource::Examples { examples: ex } = &def.source {
                if ex.is_empty() {
                    return Err(Error::Agent(format!("agent {:?} has no examples", def.id)));
                }
                intents.push(def.intent.clone());
                examples.extend(ex.iter().map(|e| (e.clone(), def.intent.clone())));
            }
        }
        let model = if examples.is_empty() {
            None
        } else {
            Some(Arc::new(IntentModel::train(&examples, &intents, alpha)?))
        };

        let mut saved: BTreeMap<&Path, Arc<IntentModel>> = BTreeMap::new();
        for def in defs {
            if let AgentSource::Model { model: path } = &def.source {
                if !saved.contains_key(path.as_path()) {
                    saved.insert(path, Arc::new(IntentModel::load(path)?));
                }
            }
        }

        let mut registry = Registry::new();
        for def in defs {
            let mut agent: Box<dyn Agent> = match &def.source {
                AgentSource::Examples { .. } => Box::new(IntentAgent::new(
                    &def.id,
                    &def.intent,
                    model.clone().expect("model trained"),
                )?),
                AgentSource::Keywords {
                    keywords,
                    weight_per_hit,
                } => Box::new(KeywordAgent::new(
                    &def.id,
                    &def.intent,
                    keywords,
                    *weight_per_hit,
                )?),
                AgentSource::Fixed {
                    fixed_scores,
                    default,
                } => {
                    let mut stub = StubAgent::new(&def.id, &def.intent).with_default(*default);
                    for (frag, c) in fixed_scores {
                        stub = stub.with_score(frag, *c);
                    }
                    Box::new(stub)
                }
                AgentSource::Model { model: path } => Box::new(IntentAgent::new(
                    &def.id,
                    &def.intent,
                    saved[path.as_path()].clone(),
                )?),
            };
            if !def.preview {
                let mut desc = agent.descriptor().clone();
                desc.has_preview = false;
                agent = Box::new(NoPreview {
                    desc,
                    _inner: agent,
                });
            }
            registry.register_boxed(agent)?;
        }
        Ok(registry)
    }
}

struct NoPreview {
    desc: AgentDescriptor,
    _inner: Box<dyn Agent>,
}

impl Agent for NoPreview {
    fn descriptor(&self) -> &AgentDescriptor {
        &self.desc
    }

    fn evaluate(&self, _: &Utterance) -> std::result::Result<f64, AgentFault> {
        Ok(0.0)
    }
}

/// One agent record of an agent definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDefinition {
    pub id: String,
    pub intent: String,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub preview: bool,
    #[serde(flatten)]
    pub source: AgentSource,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentSource {
    Examples {
        examples: Vec<String>,
    },
    Keywords {
        keywords: Vec<String>,
        weight_per_hit: f64,
    },
    Fixed {
        fixed_scores: BTreeMap<String, f64>,
        #[serde(default)]
        default: f64,
    },
    /// A saved [`IntentModel`]; the agent reads its own intent's posterior.
    Model {
        model: PathBuf,
    },
}

/// Reads agent definitions: one JSON record per line, `#` comments and
/// blank lines ignored.
pub fn load_definitions(path: impl AsRef<Path>) -> Result<Vec<AgentDefinition>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut defs = parse_definitions(&raw).map_err(|e| match e {
        Error::Format { context, message } => Error::Format {
            context: format!("{}:{context}", path.display()),
            message,
        },
        other => other,
    })?;
    // model paths are relative to the definition file
    let base = path.parent().unwrap_or(Path::new(""));
    for def in &mut defs {
        if let AgentSource::Model { model } = &mut def.source {
            if model.is_relative() {
                *model = base.join(&*model);
            }
        }
    }
    Ok(defs)
}

pub fn parse_definitions(raw: &str) -> Result<Vec<AgentDefinition>> {
    let mut defs = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let def: AgentDefinition = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("line {}", lineno + 1), e))?;
        defs.push(def);
    }
    if defs.is_empty() {
        return Err(Error::Agent("agent definition file holds no agents".into()));
    }
    Ok(defs)
}

/// Binds fragments to their best agents, caching by normalized text for the
/// lifetime of one parse.
pub struct Broadcaster<'r> {
    registry: &'r Registry,
    scorer: fn(&EvaluationResult) -> f64,
    cache: HashMap<String, Binding>,
    previews: usize,
}

impl<'r> Broadcaster<'r> {
    pub fn new(registry: &'r Registry) -> Result<Self> {
        Self::with_scorer(registry, crate::pipeline::default_scorer)
    }

    pub fn with_scorer(
        registry: &'r Registry,
        scorer: fn(&EvaluationResult) -> f64,
    ) -> Result<Self> {
        if registry.is_empty() {
            return Err(Error::Agent("cannot broadcast to an empty registry".into()));
        }
        Ok(Broadcaster {
            registry,
            scorer,
            cache: HashMap::new(),
            previews: 0,
        })
    }

    /// Previews `u` with every agent and keeps the most confident one; equal
    /// confidences go to the lexicographically smallest id.
    pub fn bind(&mut self, u: &Utterance) -> Binding {
        let key = normalize_for_comparison(&u.text);
        if let Some(b) = self.cache.get(&key) {
            return b.clone();
        }
        let mut best: Option<(f64, &AgentDescriptor)> = None;
        for agent in self.registry.agents() {
            let desc = agent.descriptor();
            let result = preview(agent, u);
            self.previews += 1;
            let score = (self.scorer)(&result);
            let score = if score.is_finite() {
                score.clamp(0.0, 1.0)
            } else {
                0.0
            };
            best = match best {
                Some((s, d)) if s > score || (s == score && d.id <= desc.id) => Some((s, d)),
                _ => Some((score, desc)),
            };
        }
        let (confidence, desc) = best.expect("registry is non-empty");
        let binding = Binding {
            agent: desc.id.clone(),
            intent: desc.intent.clone(),
            confidence,
        };
        self.cache.insert(key, binding.clone());
        binding
    }

    pub fn broadcast(&mut self, fragments: &[Utterance]) -> Vec<Binding> {
        fragments.iter().map(|f| self.bind(f)).collect()
    }

    /// Number of agent previews issued so far (cache hits excluded).
    pub fn preview_count(&self) -> usize {
        self.previews
    }
}
