//! Tokenization and split-point enumeration.
//!
//! A split point replaces one utterance by two or more fragments. Four
//! sources of splits are recognised: single-token conjunctions ("and",
//! "then", "when", ...), ordered double-word pairs ("first ... then"),
//! punctuation marks, and a shallow coordination rule that distributes a
//! shared prefix/suffix over two coordinated noun runs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub index: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn is_word(&self) -> bool {
        self.kind == TokenKind::Word
    }

    fn lower(&self) -> String {
        self.surface.to_lowercase()
    }
}

/// A user event: the verbatim text and its tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Utterance {
    pub fn new(text: impl Into<String>, marks: &BTreeSet<char>) -> Self {
        let text = text.into();
        let tokens = tokenize_with(&text, marks);
        Utterance { text, tokens }
    }

    /// Builds an utterance from a token run, rendering punctuation attached
    /// to the preceding word.
    pub fn from_tokens<'a, I>(tokens: I, marks: &BTreeSet<char>) -> Self
    where
        I: IntoIterator<Item = &'a Token>,
    {
        Utterance::new(render(tokens), marks)
    }

    pub fn is_blank(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word()).count()
    }

    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_word())
    }
}

impl std::fmt::Display for Utterance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

fn render<'a, I>(tokens: I) -> String
where
    I: IntoIterator<Item = &'a Token>,
{
    let mut out = String::new();
    for tok in tokens {
        if !out.is_empty() && tok.is_word() {
            out.push(' ');
        }
        out.push_str(&tok.surface);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    SingleConjunction,
    DoubleWord,
    Punctuation,
    Dependency,
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SplitKind::SingleConjunction => "single_conjunction",
            SplitKind::DoubleWord => "double_word",
            SplitKind::Punctuation => "punctuation",
            SplitKind::Dependency => "dependency",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub kind: SplitKind,
    /// Token indices consumed by the split.
    pub anchor_indices: Vec<usize>,
    pub fragments: Vec<Utterance>,
    /// For each fragment, the token index in the split utterance that fixes
    /// its execution order (first contributed token, or the coordinated
    /// element for dependency splits).
    pub fragment_starts: Vec<usize>,
    /// For each fragment token, the index of the token it came from.
    pub fragment_sources: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub single_conjunctions: BTreeSet<String>,
    pub double_word_pairs: BTreeSet<(String, String)>,
    pub punctuation_marks: BTreeSet<char>,
    pub enable_dependency: bool,
    pub min_fragment_words: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        SplitConfig {
            single_conjunctions: words(&[
                "and", "then", "before", "after", "also", "plus", "if", "when",
            ]),
            double_word_pairs: [("first", "then"), ("first", "second"), ("first", "after")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            punctuation_marks: default_marks(),
            enable_dependency: true,
            min_fragment_words: 2,
        }
    }
}

pub fn default_marks() -> BTreeSet<char> {
    [',', '.', ';', '?', '!'].into_iter().collect()
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_fragment_words < 1 {
            return Err(Error::InvalidConfig(
                "min_fragment_words must be >= 1".into(),
            ));
        }
        let lower = |w: &String| *w == w.to_lowercase();
        if !self.single_conjunctions.iter().all(lower)
            || !self
                .double_word_pairs
                .iter()
                .all(|(a, b)| lower(a) && lower(b))
        {
            return Err(Error::InvalidConfig(
                "lexicon entries must be lowercase".into(),
            ));
        }
        if self
            .punctuation_marks
            .iter()
            .any(|c| c.is_alphanumeric() || c.is_whitespace())
        {
            return Err(Error::InvalidConfig(
                "punctuation marks must be non-alphanumeric, non-space characters".into(),
            ));
        }
        Ok(())
    }

    pub fn utterance(&self, text: impl Into<String>) -> Utterance {
        Utterance::new(text, &self.punctuation_marks)
    }

    fn is_conjunction(&self, tok: &Token) -> bool {
        tok.is_word() && self.single_conjunctions.contains(&tok.lower())
    }
}

/// Tokenizes with the default punctuation set.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, &default_marks())
}

/// Splits on whitespace, then peels configured punctuation characters off
/// both ends of every chunk into their own tokens.
pub fn tokenize_with(text: &str, marks: &BTreeSet<char>) -> Vec<Token> {
    let mut tokens = Vec::new();
    let push = |surface: &str, kind: TokenKind, tokens: &mut Vec<Token>| {
        let index = tokens.len();
        tokens.push(Token {
            surface: surface.to_string(),
            index,
            kind,
        });
    };
    for chunk in text.split_whitespace() {
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let lead = chars.iter().take_while(|(_, c)| marks.contains(c)).count();
        if lead == chars.len() {
            for (_, c) in &chars {
                push(&c.to_string(), TokenKind::Punctuation, &mut tokens);
            }
            continue;
        }
        let trail = chars
            .iter()
            .rev()
            .take_while(|(_, c)| marks.contains(c))
            .count();
        for (_, c) in &chars[..lead] {
            push(&c.to_string(), TokenKind::Punctuation, &mut tokens);
        }
        let start = chars[lead].0;
        let end = chars
            .get(chars.len() - trail)
            .map(|(i, _)| *i)
            .unwrap_or(chunk.len());
        push(&chunk[start..end], TokenKind::Word, &mut tokens);
        for (_, c) in &chars[chars.len() - trail..] {
            push(&c.to_string(), TokenKind::Punctuation, &mut tokens);
        }
    }
    tokens
}

/// Words that open a shared suffix in the coordination rule.
const SUFFIX_MARKERS: &[&str] = &[
    "to", "from", "in", "on", "at", "for", "with", "by", "of", "into", "near", "via", "about",
    "during", "until", "tomorrow", "today", "tonight",
];

/// Words that mark an elliptical noun phrase after a "first ... then" pair.
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "some", "my", "your", "our", "this", "that", "these", "those", "another",
];

fn trim_punct(tokens: &[Token]) -> &[Token] {
    let start = tokens
        .iter()
        .position(Token::is_word)
        .unwrap_or(tokens.len());
    let end = tokens
        .iter()
        .rposition(Token::is_word)
        .map_or(start, |i| i + 1);
    &tokens[start..end]
}

fn words_in(tokens: &[Token]) -> usize {
    tokens.iter().filter(|t| t.is_word()).count()
}

/// Builds a partition split from the given token runs, or `None` when any
/// run falls below the minimum fragment size.
fn partition_split(
    kind: SplitKind,
    anchors: Vec<usize>,
    runs: &[&[Token]],
    cfg: &SplitConfig,
) -> Option<SplitPoint> {
    let mut fragments = Vec::with_capacity(runs.len());
    let mut starts = Vec::with_capacity(runs.len());
    let mut sources = Vec::with_capacity(runs.len());
    for run in runs {
        let run = trim_punct(run);
        if words_in(run) < cfg.min_fragment_words {
            return None;
        }
        starts.push(run[0].index);
        sources.push(run.iter().map(|t| t.index).collect());
        fragments.push(Utterance::from_tokens(run, &cfg.punctuation_marks));
    }
    Some(SplitPoint {
        kind,
        anchor_indices: anchors,
        fragments,
        fragment_starts: starts,
        fragment_sources: sources,
    })
}

/// Enumerates every split that applies to `u`, one split per point.
pub fn find_split_points(u: &Utterance, cfg: &SplitConfig) -> Vec<SplitPoint> {
    let toks = &u.tokens;
    let mut out = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        // a run of conjunctions ("and then", "and also") is one anchor
        if cfg.is_conjunction(tok) && !(i > 0 && cfg.is_conjunction(&toks[i - 1])) {
            let end = (i..toks.len())
                .find(|&j| !cfg.is_conjunction(&toks[j]))
                .unwrap_or(toks.len());
            let runs: [&[Token]; 2] = [&toks[..i], &toks[end..]];
            out.extend(partition_split(
                SplitKind::SingleConjunction,
                (i..end).collect(),
                &runs,
                cfg,
            ));
            if cfg.enable_dependency && end == i + 1 {
                out.extend(distribute_coordination(u, i, cfg));
            }
        }
        if tok.is_word() {
            let lower = tok.lower();
            for (first, second) in &cfg.double_word_pairs {
                if *first == lower {
                    out.extend(double_word_splits(u, i, second, cfg));
                }
            }
        }
        if !tok.is_word()
            && tok
                .surface
                .chars()
                .all(|c| cfg.punctuation_marks.contains(&c))
        {
            out.extend(apply_punctuation_split(u, i, cfg).ok());
        }
    }
    // stable: preserves emission order within equal keys
    out.sort_by_key(|sp| (sp.anchor_indices[0], sp.kind));
    out
}

/// The double-word split anchored at `first_idx`, plus, when the second
/// fragment is an elliptical noun phrase, a dependency split that copies the
/// leading verb of the first fragment onto it.
fn double_word_splits(
    u: &Utterance,
    first_idx: usize,
    second: &str,
    cfg: &SplitConfig,
) -> Vec<SplitPoint> {
    let toks = &u.tokens;
    let Some(second_idx) = toks[first_idx + 1..]
        .iter()
        .position(|t| t.is_word() && t.lower() == second)
        .map(|p| p + first_idx + 1)
    else {
        return Vec::new();
    };
    // an "and" right before the second anchor belongs to the connective
    let mut middle_end = second_idx;
    let mut anchors = vec![first_idx, second_idx];
    if let Some(prev) = toks[first_idx + 1..second_idx]
        .iter()
        .rev()
        .find(|t| t.is_word())
    {
        if cfg.is_conjunction(prev) {
            middle_end = prev.index;
            anchors.insert(1, prev.index);
        }
    }
    // words ahead of the first anchor stay with the first fragment
    let head: Vec<Token> = toks[..first_idx]
        .iter()
        .chain(&toks[first_idx + 1..middle_end])
        .cloned()
        .collect();
    let right = &toks[second_idx + 1..];
    let Some(mut split) =
        partition_split(SplitKind::DoubleWord, anchors.clone(), &[&head, right], cfg)
    else {
        return Vec::new();
    };
    // fragment order follows the tokens after each anchor
    if let Some(first_word) = toks[first_idx + 1..middle_end].iter().find(|t| t.is_word()) {
        split.fragment_starts[0] = first_word.index;
    }
    let mut out = vec![split];

    if cfg.enable_dependency {
        let middle = trim_punct(&toks[first_idx + 1..middle_end]);
        let right = trim_punct(right);
        let is_det = |t: &Token| DETERMINERS.contains(&t.lower().as_str());
        if let (Some(verb), Some(obj)) = (middle.first(), right.first()) {
            if middle.len() >= 2 && !is_det(verb) && is_det(obj) {
                let second_frag: Vec<&Token> = std::iter::once(verb).chain(right).collect();
                out.push(SplitPoint {
                    kind: SplitKind::Dependency,
                    anchor_indices: anchors,
                    fragments: vec![
                        Utterance::from_tokens(middle, &cfg.punctuation_marks),
                        Utterance::from_tokens(second_frag.iter().copied(), &cfg.punctuation_marks),
                    ],
                    fragment_starts: vec![middle[0].index, obj.index],
                    fragment_sources: vec![
                        middle.iter().map(|t| t.index).collect(),
                        second_frag.iter().map(|t| t.index).collect(),
                    ],
                });
            }
        }
    }
    out
}

/// Splits at the punctuation mark at `mark_index`, dropping the mark.
pub fn apply_punctuation_split(
    u: &Utterance,
    mark_index: usize,
    cfg: &SplitConfig,
) -> Result<SplitPoint> {
    let toks = &u.tokens;
    let tok = toks.get(mark_index).ok_or(Error::Split(format!(
        "token index {mark_index} out of range"
    )))?;
    if tok.is_word()
        || !tok
            .surface
            .chars()
            .all(|c| cfg.punctuation_marks.contains(&c))
    {
        return Err(Error::Split(format!(
            "token {:?} is not a punctuation mark",
            tok.surface
        )));
    }
    let left = &toks[..mark_index];
    let right = &toks[mark_index + 1..];
    if words_in(right) == 0 {
        return Err(Error::Split(
            "no right fragment after punctuation mark".into(),
        ));
    }
    if words_in(left) == 0 {
        return Err(Error::Split(
            "no left fragment before punctuation mark".into(),
        ));
    }
    partition_split(
        SplitKind::Punctuation,
        vec![mark_index],
        &[left, right],
        cfg,
    )
    .ok_or_else(|| {
        Error::Split(format!(
            "fragment shorter than {} words around punctuation mark",
            cfg.min_fragment_words
        ))
    })
}

/// Shallow coordination distribution over `prefix N1 conj N2 suffix`.
///
/// `N2` is the word run after the conjunction up to a suffix marker,
/// punctuation, or the end of the utterance, and must hold one or two
/// words. `N1` is the equally long run before the conjunction. The prefix
/// must hold at least one word and no conjunction.
pub fn distribute_coordination(
    u: &Utterance,
    conj_index: usize,
    cfg: &SplitConfig,
) -> Option<SplitPoint> {
    let toks = &u.tokens;
    if !cfg.is_conjunction(toks.get(conj_index)?) {
        return None;
    }
    let is_marker = |t: &Token| SUFFIX_MARKERS.contains(&t.lower().as_str());

    let mut n2_end = conj_index + 1;
    while n2_end < toks.len() && toks[n2_end].is_word() && !is_marker(&toks[n2_end]) {
        if cfg.is_conjunction(&toks[n2_end]) {
            return None;
        }
        n2_end += 1;
    }
    let n2_len = n2_end - conj_index - 1;
    if !(1..=2).contains(&n2_len) {
        return None;
    }
    let n1_start = conj_index.checked_sub(n2_len)?;
    let n1 = &toks[n1_start..conj_index];
    if !n1
        .iter()
        .all(|t| t.is_word() && !is_marker(t) && !cfg.is_conjunction(t))
    {
        return None;
    }
    let prefix = &toks[..n1_start];
    if words_in(prefix) == 0 || prefix.iter().any(|t| cfg.is_conjunction(t)) {
        return None;
    }
    let n2 = &toks[conj_index + 1..n2_end];
    let suffix = trim_punct(&toks[n2_end..]);
    if suffix.iter().any(|t| cfg.is_conjunction(t)) {
        return None;
    }

    let build = |element: &[Token]| {
        let run: Vec<&Token> = prefix.iter().chain(element).chain(suffix).collect();
        let start = run.iter().position(|t| t.is_word()).unwrap_or(0);
        let run = &run[start..];
        let sources: Vec<usize> = run.iter().map(|t| t.index).collect();
        (
            Utterance::from_tokens(run.iter().copied(), &cfg.punctuation_marks),
            sources,
        )
    };
    let (first, first_src) = build(n1);
    let (second, second_src) = build(n2);
    if first.word_count() < cfg.min_fragment_words || second.word_count() < cfg.min_fragment_words {
        return None;
    }
    Some(SplitPoint {
        kind: SplitKind::Dependency,
        anchor_indices: vec![conj_index],
        fragments: vec![first, second],
        fragment_starts: vec![n1_start, conj_index + 1],
        fragment_sources: vec![first_src, second_src],
    })
}
