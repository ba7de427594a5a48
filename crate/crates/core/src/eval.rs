//! Benchmark harness: datasets, parse comparison, outcome categories, and
//! timing.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::Registry;
use crate::error::{Error, Result};
use crate::pipeline::{handle_event, PipelineConfig, PlanEntry};
use crate::splitter::default_marks;
use crate::tree::ParseOutcome;

/// Lowercases, drops the default punctuation marks, and collapses
/// whitespace.
pub fn normalize_for_comparison(text: &str) -> String {
    normalize_with(text, &default_marks())
}

pub fn normalize_with(text: &str, marks: &BTreeSet<char>) -> String {
    let stripped: String = text.chars().filter(|c| !marks.contains(c)).collect();
    stripped
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInstance {
    pub text: String,
    pub parses: Vec<String>,
    pub intents: Vec<String>,
}

impl DatasetInstance {
    pub fn single(text: impl Into<String>, intent: impl Into<String>) -> Self {
        let text = text.into();
        DatasetInstance {
            parses: vec![text.clone()],
            text,
            intents: vec![intent.into()],
        }
    }

    pub fn is_multi_intent(&self) -> bool {
        self.parses.len() > 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Dataset("blank text".into()));
        }
        if self.parses.is_empty() || self.parses.len() != self.intents.len() {
            return Err(Error::Dataset(format!(
                "{} gold parses but {} gold intents",
                self.parses.len(),
                self.intents.len()
            )));
        }
        Ok(())
    }
}

/// Instances plus the number of records that could not be read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub instances: Vec<DatasetInstance>,
    pub malformed: usize,
}

/// Reads one JSON record per line (`{"text", "parses", "intents"}`).
/// Unreadable or ill-formed records are counted, not fatal; a file with no
/// records at all is an error.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&raw)
}

pub fn parse_dataset(raw: &str) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for line in raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        match serde_json::from_str::<DatasetInstance>(line) {
            Ok(inst) if inst.validate().is_ok() => ds.instances.push(inst),
            _ => ds.malformed += 1,
        }
    }
    if ds.instances.is_empty() && ds.malformed == 0 {
        return Err(Error::Dataset("dataset holds no records".into()));
    }
    Ok(ds)
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[DatasetInstance]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).map_err(|e| Error::format("dataset", e))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Converts `text<TAB>intent` lines (single-intent, ATIS style).
pub fn from_atis_tsv(raw: &str) -> Dataset {
    let mut ds = Dataset::default();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        match line.split_once('\t') {
            Some((text, intent)) if !text.trim().is_empty() && !intent.trim().is_empty() => ds
                .instances
                .push(DatasetInstance::single(text.trim(), intent.trim())),
            _ => ds.malformed += 1,
        }
    }
    ds
}

/// Converts MixATIS-style BIO files: one `token tag` pair per line, then a
/// line holding the `#`-joined intents, then a blank line.
///
/// Gold parses are recovered by splitting the sentence at the connective
/// `and` when the number of `and` tokens is exactly one less than the
/// number of intents; other sentences are counted as malformed.
pub fn from_mixatis_bio(raw: &str) -> Dataset {
    let mut ds = Dataset::default();
    let mut tokens: Vec<String> = Vec::new();
    let flush = |tokens: &mut Vec<String>, intent_line: &str, ds: &mut Dataset| {
        let intents: Vec<String> = intent_line
            .split('#')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let text = tokens.join(" ");
        let pieces: Vec<String> = tokens
            .split(|t| t.eq_ignore_ascii_case("and"))
            .map(|p| p.join(" "))
            .collect();
        tokens.clear();
        if intents.is_empty() || text.is_empty() {
            ds.malformed += 1;
        } else if intents.len() == 1 {
            ds.instances.push(DatasetInstance {
                parses: vec![text.clone()],
                text,
                intents,
            });
        } else if pieces.len() == intents.len() && pieces.iter().all(|p| !p.is_empty()) {
            ds.instances.push(DatasetInstance {
                text,
                parses: pieces,
                intents,
            });
        } else {
            ds.malformed += 1;
        }
    };
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !tokens.is_empty() {
                ds.malformed += 1;
                tokens.clear();
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(tok), Some(_tag), None) => tokens.push(tok.to_string()),
            (Some(intents), None, None) => flush(&mut tokens, intents, &mut ds),
            _ => ds.malformed += 1,
        }
    }
    if !tokens.is_empty() {
        ds.malformed += 1;
    }
    ds
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OutcomeCategory {
    /// Correct parse, correct agents.
    Cpca,
    /// Correct parse, wrong agents.
    Cpwa,
    /// Wrong parse, correct agents.
    Wpca,
    /// Wrong parse, wrong agents.
    Wpwa,
}

impl OutcomeCategory {
    pub const ALL: [OutcomeCategory; 4] = [
        OutcomeCategory::Cpca,
        OutcomeCategory::Cpwa,
        OutcomeCategory::Wpca,
        OutcomeCategory::Wpwa,
    ];

    pub fn parse_correct(self) -> bool {
        matches!(self, OutcomeCategory::Cpca | OutcomeCategory::Cpwa)
    }

    pub fn agent_correct(self) -> bool {
        matches!(self, OutcomeCategory::Cpca | OutcomeCategory::Wpca)
    }

    fn from_flags(parse: bool, agent: bool) -> Self {
        match (parse, agent) {
            (true, true) => OutcomeCategory::Cpca,
            (true, false) => OutcomeCategory::Cpwa,
            (false, true) => OutcomeCategory::Wpca,
            (false, false) => OutcomeCategory::Wpwa,
        }
    }
}

impl std::fmt::Display for OutcomeCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeCategory::Cpca => "CPCA",
            OutcomeCategory::Cpwa => "CPWA",
            OutcomeCategory::Wpca => "WPCA",
            OutcomeCategory::Wpwa => "WPWA",
        })
    }
}

/// For each predicted fragment, the gold parse it overlaps most (shared
/// normalized words); ties go to the earliest gold parse.
pub fn align_to_gold(predicted: &[&str], gold: &[String]) -> Vec<usize> {
    let words = |s: &str| -> Vec<String> {
        normalize_for_comparison(s)
            .split(' ')
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect()
    };
    let gold_words: Vec<Vec<String>> = gold.iter().map(|g| words(g)).collect();
    predicted
        .iter()
        .map(|p| {
            let mut pw = words(p);
            let mut best = (0usize, 0usize);
            for (gi, gw) in gold_words.iter().enumerate() {
                let mut pool = gw.clone();
                let shared = pw
                    .iter_mut()
                    .filter(|w| {
                        pool.iter()
                            .position(|g| g == *w)
                            .map(|i| pool.swap_remove(i))
                            .is_some()
                    })
                    .count();
                if shared > best.1 {
                    best = (gi, shared);
                }
            }
            best.0
        })
        .collect()
}

fn sorted(items: impl IntoIterator<Item = impl Into<String>>) -> Vec<String> {
    let mut v: Vec<String> = items.into_iter().map(Into::into).collect();
    v.sort();
    v
}

/// Places a prediction in one of the four outcome categories.
///
/// The parse is correct when the normalized fragment sequence equals the
/// normalized gold sequence. With a correct parse, agents are correct when
/// each fragment's intent matches the gold intent at the same position;
/// with a wrong parse, when the intent multisets are equal.
pub fn classify_outcome(predicted: &ParseOutcome, gold: &DatasetInstance) -> OutcomeCategory {
    classify_fragments(&predicted.texts(), &predicted.intents(), gold)
}

pub fn classify_fragments(
    texts: &[&str],
    intents: &[&str],
    gold: &DatasetInstance,
) -> OutcomeCategory {
    let parse_ok = texts.len() == gold.parses.len()
        && texts
            .iter()
            .zip(&gold.parses)
            .all(|(p, g)| normalize_for_comparison(p) == normalize_for_comparison(g));
    let agent_ok = if parse_ok {
        intents.iter().zip(&gold.intents).all(|(p, g)| p == g)
    } else {
        sorted(intents.iter().copied()) == sorted(gold.intents.iter().map(String::as_str))
    };
    OutcomeCategory::from_flags(parse_ok, agent_ok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub text: String,
    pub gold_parses: Vec<String>,
    pub gold_intents: Vec<String>,
    pub predicted_parses: Vec<String>,
    pub predicted_agents: Vec<String>,
    pub predicted_intents: Vec<String>,
    /// Gold parse index each predicted fragment aligns to.
    pub alignment: Vec<usize>,
    pub category: OutcomeCategory,
    pub multi_intent: bool,
    pub parse_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    #[serde(rename = "CPCA")]
    pub cpca: usize,
    #[serde(rename = "CPWA")]
    pub cpwa: usize,
    #[serde(rename = "WPCA")]
    pub wpca: usize,
    #[serde(rename = "WPWA")]
    pub wpwa: usize,
}

impl CategoryCounts {
    pub fn add(&mut self, cat: OutcomeCategory) {
        *self.get_mut(cat) += 1;
    }

    pub fn get(&self, cat: OutcomeCategory) -> usize {
        match cat {
            OutcomeCategory::Cpca => self.cpca,
            OutcomeCategory::Cpwa => self.cpwa,
            OutcomeCategory::Wpca => self.wpca,
            OutcomeCategory::Wpwa => self.wpwa,
        }
    }

    fn get_mut(&mut self, cat: OutcomeCategory) -> &mut usize {
        match cat {
            OutcomeCategory::Cpca => &mut self.cpca,
            OutcomeCategory::Cpwa => &mut self.cpwa,
            OutcomeCategory::Wpca => &mut self.wpca,
            OutcomeCategory::Wpwa => &mut self.wpwa,
        }
    }

    pub fn total(&self) -> usize {
        self.cpca + self.cpwa + self.wpca + self.wpwa
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRates {
    #[serde(rename = "CPCA")]
    pub cpca: f64,
    #[serde(rename = "CPWA")]
    pub cpwa: f64,
    #[serde(rename = "WPCA")]
    pub wpca: f64,
    #[serde(rename = "WPWA")]
    pub wpwa: f64,
}

impl CategoryRates {
    pub fn sum(&self) -> f64 {
        self.cpca + self.cpwa + self.wpca + self.wpwa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
}

impl TimingStats {
    fn from_samples(samples: &mut [f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            (samples[n / 2 - 1] + samples[n / 2]) / 2.0
        };
        Some(TimingStats {
            count: n,
            mean_seconds: samples.iter().sum::<f64>() / n as f64,
            median_seconds: median,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub single_intent: Option<TimingStats>,
    pub multi_intent: Option<TimingStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub instances: usize,
    pub malformed: usize,
    pub multi_intent_instances: usize,
    pub counts: CategoryCounts,
    /// Over multi-intent instances only.
    pub rates: CategoryRates,
    /// CPCA + CPWA.
    pub correct_parse_rate: f64,
    /// CPCA + WPCA.
    pub correct_agent_rate: f64,
    pub single_intent_instances: usize,
    pub single_intent_correct: usize,
    pub single_intent_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingReport>,
}

impl MetricsReport {
    pub fn from_records(records: &[InstanceRecord], malformed: usize) -> Self {
        let mut counts = CategoryCounts::default();
        let mut single_total = 0;
        let mut single_correct = 0;
        let mut single_times = Vec::new();
        let mut multi_times = Vec::new();
        for r in records {
            if r.multi_intent {
                counts.add(r.category);
                multi_times.push(r.parse_seconds);
            } else {
                single_total += 1;
                single_correct += usize::from(r.category == OutcomeCategory::Cpca);
                single_times.push(r.parse_seconds);
            }
        }
        let multi = counts.total();
        let rate = |c: usize| {
            if multi == 0 {
                0.0
            } else {
                c as f64 / multi as f64
            }
        };
        let rates = CategoryRates {
            cpca: rate(counts.cpca),
            cpwa: rate(counts.cpwa),
            wpca: rate(counts.wpca),
            wpwa: rate(counts.wpwa),
        };
        MetricsReport {
            instances: records.len(),
            malformed,
            multi_intent_instances: multi,
            counts,
            rates,
            correct_parse_rate: rate(counts.cpca + counts.cpwa),
            correct_agent_rate: rate(counts.cpca + counts.wpca),
            single_intent_instances: single_total,
            single_intent_correct: single_correct,
            single_intent_accuracy: if single_total == 0 {
                0.0
            } else {
                single_correct as f64 / single_total as f64
            },
            timing: Some(TimingReport {
                single_intent: TimingStats::from_samples(&mut single_times),
                multi_intent: TimingStats::from_samples(&mut multi_times),
            }),
        }
    }

    /// Copy without timing, whose values vary between runs.
    pub fn without_timing(&self) -> Self {
        MetricsReport {
            timing: None,
            ..self.clone()
        }
    }

    /// Aligned plain-text table of categories, accuracy, and parse time.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28}{:>10}{:>10}", "category", "count", "rate");
        let rates = [
            self.rates.cpca,
            self.rates.cpwa,
            self.rates.wpca,
            self.rates.wpwa,
        ];
        for (cat, rate) in OutcomeCategory::ALL.iter().zip(rates) {
            let _ = writeln!(
                out,
                "{:<28}{:>10}{:>10.3}",
                cat.to_string(),
                self.counts.get(*cat),
                rate
            );
        }
        let _ = writeln!(
            out,
            "{:<28}{:>10}{:>10.3}",
            "correct parse (CPCA+CPWA)", "", self.correct_parse_rate
        );
        let _ = writeln!(
            out,
            "{:<28}{:>10}{:>10.3}",
            "correct agent (CPCA+WPCA)", "", self.correct_agent_rate
        );
        let _ = writeln!(
            out,
            "{:<28}{:>10}{:>10.3}",
            "single-intent accuracy",
            format!(
                "{}/{}",
                self.single_intent_correct, self.single_intent_instances
            ),
            self.single_intent_accuracy
        );
        let _ = writeln!(out, "{:<28}{:>10}", "instances", self.instances);
        let _ = writeln!(out, "{:<28}{:>10}", "malformed (skipped)", self.malformed);
        if let Some(t) = &self.timing {
            let _ = writeln!(
                out,
                "{:<28}{:>10}{:>10}",
                "parse time (s)", "mean", "median"
            );
            for (label, stats) in [
                ("single-intent", t.single_intent),
                ("multi-intent", t.multi_intent),
            ] {
                match stats {
                    Some(s) => {
                        let _ = writeln!(
                            out,
                            "{:<28}{:>10.5}{:>10.5}",
                            label, s.mean_seconds, s.median_seconds
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{:<28}{:>10}{:>10}", label, "-", "-");
                    }
                }
            }
        }
        out
    }
}

/// Runs the pipeline over every instance and aggregates the outcomes.
pub fn run_benchmark(
    dataset: &Dataset,
    registry: &Registry,
    cfg: &PipelineConfig,
) -> Result<MetricsReport> {
    run_benchmark_detailed(dataset, registry, cfg).map(|(report, _)| report)
}

pub fn run_benchmark_detailed(
    dataset: &Dataset,
    registry: &Registry,
    cfg: &PipelineConfig,
) -> Result<(MetricsReport, Vec<InstanceRecord>)> {
    if dataset.instances.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    if registry.is_empty() {
        return Err(Error::Agent("empty registry".into()));
    }
    cfg.validate()?;
    let mut malformed = dataset.malformed;
    let mut records = Vec::with_capacity(dataset.instances.len());
    // benchmarks time routing only; execution is a no-op
    let mut noop = |_: &PlanEntry| -> std::result::Result<String, crate::agents::AgentFault> {
        Ok(String::new())
    };
    for inst in &dataset.instances {
        if inst.validate().is_err() {
            malformed += 1;
            continue;
        }
        let outcome = match handle_event(&inst.text, registry, cfg, &mut noop) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("skipping {:?}: {e}", inst.text);
                malformed += 1;
                continue;
            }
        };
        records.push(instance_record(
            inst,
            &outcome.plan().provenance,
            outcome.parse_elapsed,
        ));
    }
    Ok((MetricsReport::from_records(&records, malformed), records))
}

fn instance_record(
    inst: &DatasetInstance,
    predicted: &ParseOutcome,
    elapsed: std::time::Duration,
) -> InstanceRecord {
    let texts = predicted.texts();
    InstanceRecord {
        text: inst.text.clone(),
        gold_parses: inst.parses.clone(),
        gold_intents: inst.intents.clone(),
        predicted_parses: texts.iter().map(|s| s.to_string()).collect(),
        predicted_agents: predicted
            .fragments
            .iter()
            .map(|f| f.agent.clone())
            .collect(),
        predicted_intents: predicted.intents().iter().map(|s| s.to_string()).collect(),
        alignment: align_to_gold(&texts, &inst.parses),
        category: classify_outcome(predicted, inst),
        multi_intent: inst.is_multi_intent(),
        parse_seconds: elapsed.as_secs_f64(),
    }
}
