//! Report cleaning, tokenization and vocabulary.
//!
//! Cleaning applies these rules in order:
//!
//! 1. reject when the raw findings text has fewer than `min_words` words;
//! 2. reject when the lowercased text matches a prior-study pattern;
//! 3. lowercase, then delete noise patterns;
//! 4. replace every character that is neither alphanumeric nor whitespace
//!    with a space and split on whitespace;
//! 5. drop tokens containing a digit, then stop words;
//! 6. rewrite phrases through the standardization map, longest match first;
//! 7. reject when nothing is left, otherwise wrap in start/end markers.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAD: &str = "<pad>";
pub const START: &str = "<start>";
pub const END: &str = "<end>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const START_ID: usize = 1;
pub const END_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const RESERVED: [&str; 4] = [PAD, START, END, UNK];

pub const DEFAULT_MIN_WORDS: usize = 9;
pub const DEFAULT_VOCAB_CAP: usize = 2212;

const DEFAULT_STOPWORDS: &str = include_str!("../resources/stopwords.txt");
const DEFAULT_STANDARDIZATION: &str = include_str!("../resources/standardization.txt");
const DEFAULT_PRIOR_PATTERNS: &str = include_str!("../resources/prior_study_patterns.txt");

/// Findings text of one study.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReport {
    pub id: String,
    pub text: String,
}

/// Cleaned token sequence wrapped in start/end markers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CleanReport {
    id: String,
    tokens: Vec<String>,
}

impl CleanReport {
    /// Wraps interior tokens in markers after checking they are clean.
    pub fn from_interior(id: impl Into<String>, interior: Vec<String>) -> Result<Self> {
        if interior.is_empty() {
            return Err(Error::Data("report has no tokens".into()));
        }
        if let Some(bad) = interior.iter().find(|t| !is_clean_token(t)) {
            return Err(Error::Data(format!("token {bad:?} is not clean")));
        }
        let mut tokens = Vec::with_capacity(interior.len() + 2);
        tokens.push(START.to_string());
        tokens.extend(interior);
        tokens.push(END.to_string());
        Ok(Self { id: id.into(), tokens })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// All tokens including the markers.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn interior(&self) -> &[String] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    /// Interior tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.interior().join(" ")
    }
}

fn is_clean_token(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_alphabetic() && !c.is_uppercase())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooShort,
    PriorStudy,
    Empty,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::TooShort => "too_short",
            Self::PriorStudy => "prior_study",
            Self::Empty => "empty",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CleanOutcome {
    Clean(CleanReport),
    Rejected { id: String, reason: RejectReason },
}

impl CleanOutcome {
    pub fn report(&self) -> Option<&CleanReport> {
        match self {
            Self::Clean(r) => Some(r),
            Self::Rejected { .. } => None,
        }
    }

    pub fn into_report(self) -> Option<CleanReport> {
        match self {
            Self::Clean(r) => Some(r),
            Self::Rejected { .. } => None,
        }
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            Self::Clean(_) => None,
            Self::Rejected { reason, .. } => Some(*reason),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// One word per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Self(words.into_iter().map(Into::into).collect())
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Phrase rewrite rules applied to token sequences, longest phrase first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StandardizationMap {
    rules: Vec<(Vec<String>, Vec<String>)>,
}

impl StandardizationMap {
    /// Builds a map and checks that every canonical form is a fixed point.
    pub fn new<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let split = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>();
        let mut rules: Vec<(Vec<String>, Vec<String>)> = Vec::new();
        for (from, to) in pairs {
            let (from, to) = (split(from.as_ref()), split(to.as_ref()));
            if from.is_empty() || to.is_empty() {
                return Err(Error::Config("standardization rule with an empty side".into()));
            }
            if rules.iter().any(|(f, _)| *f == from) {
                return Err(Error::Config(format!(
                    "duplicate standardization phrase {:?}",
                    from.join(" ")
                )));
            }
            rules.push((from, to));
        }
        // longest first, then lexicographic, so application order is total
        rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        let map = Self { rules };
        for (_, to) in &map.rules {
            if map.apply(to) != *to {
                return Err(Error::Config(format!(
                    "canonical form {:?} is rewritten by another rule",
                    to.join(" ")
                )));
            }
        }
        Ok(map)
    }

    /// Lines of `phrase => canonical`; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (from, to) = line
                .split_once("=>")
                .ok_or_else(|| Error::Config(format!("standardization line {}: missing =>", n + 1)))?;
            pairs.push((from.trim().to_string(), to.trim().to_string()));
        }
        Self::new(pairs)
    }

    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_STANDARDIZATION).expect("shipped standardization rules are valid")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn apply(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        'outer: while i < tokens.len() {
            for (from, to) in &self.rules {
                if tokens[i..].starts_with(from) {
                    out.extend(to.iter().cloned());
                    i += from.len();
                    continue 'outer;
                }
            }
            out.push(tokens[i].clone());
            i += 1;
        }
        out
    }
}

/// Everything `clean_report` needs besides the report.
#[derive(Clone, Debug)]
pub struct CleaningConfig {
    pub min_words: usize,
    pub stopwords: StopWords,
    pub standardization: StandardizationMap,
    pub prior_study_patterns: Vec<Regex>,
    /// Removed from the lowercased text before tokenization.
    pub noise_patterns: Vec<Regex>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            min_words: DEFAULT_MIN_WORDS,
            stopwords: StopWords::english(),
            standardization: StandardizationMap::default_rules(),
            prior_study_patterns: parse_patterns(DEFAULT_PRIOR_PATTERNS).expect("shipped prior-study patterns compile"),
            noise_patterns: Vec::new(),
        }
    }
}

/// One regular expression per line; blank lines and `#` comments ignored.
pub fn parse_patterns(text: &str) -> Result<Vec<Regex>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| Regex::new(l).map_err(|e| Error::Config(format!("pattern {l:?}: {e}"))))
        .collect()
}

impl CleaningConfig {
    /// Loads optional override files; `None` keeps the shipped default.
    pub fn from_files(
        stopwords: Option<&Path>,
        standardization: Option<&Path>,
        prior_patterns: Option<&Path>,
        noise_patterns: Option<&Path>,
    ) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let mut cfg = Self::default();
        if let Some(p) = stopwords {
            cfg.stopwords = StopWords::parse(&read(p)?);
        }
        if let Some(p) = standardization {
            cfg.standardization = StandardizationMap::parse(&read(p)?)?;
        }
        if let Some(p) = prior_patterns {
            cfg.prior_study_patterns = parse_patterns(&read(p)?)?;
        }
        if let Some(p) = noise_patterns {
            cfg.noise_patterns = parse_patterns(&read(p)?)?;
        }
        Ok(cfg)
    }
}

/// Counts words in raw text: whitespace-separated chunks with at least one
/// alphanumeric character.
pub fn raw_word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .count()
}

pub fn clean_report(raw: &RawReport, cfg: &CleaningConfig) -> CleanOutcome {
    let reject = |reason| CleanOutcome::Rejected {
        id: raw.id.clone(),
        reason,
    };
    if raw_word_count(&raw.text) < cfg.min_words {
        return reject(RejectReason::TooShort);
    }
    let mut text = raw.text.to_lowercase();
    if cfg.prior_study_patterns.iter().any(|p| p.is_match(&text)) {
        return reject(RejectReason::PriorStudy);
    }
    for p in &cfg.noise_patterns {
        text = p.replace_all(&text, " ").into_owned();
    }
    let stripped: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    let tokens: Vec<String> = stripped
        .split_whitespace()
        .filter(|t| !t.chars().any(char::is_numeric))
        .filter(|t| !cfg.stopwords.contains(t))
        .map(str::to_string)
        .collect();
    let tokens = cfg.standardization.apply(&tokens);
    if tokens.is_empty() {
        return reject(RejectReason::Empty);
    }
    match CleanReport::from_interior(raw.id.clone(), tokens) {
        Ok(r) => CleanOutcome::Clean(r),
        Err(_) => reject(RejectReason::Empty),
    }
}

/// Token list with fixed reserved ids for pad, start, end and unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::Data(format!(
                "vocabulary must start with {}",
                RESERVED.join(", ")
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token, or the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Tokens for `ids`, stopping at the end marker and skipping pad/start.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != END_ID)
            .filter(|&&id| id != PAD_ID && id != START_ID)
            .map(|&id| self.token(id).unwrap_or(UNK).to_string())
            .collect()
    }
}

/// Ranks interior tokens by descending frequency (ties lexicographic) and
/// keeps the top `cap - 4` after the reserved tokens.
pub fn build_vocabulary(corpus: &[CleanReport], cap: usize) -> Result<Vocabulary> {
    if cap <= RESERVED.len() {
        return Err(Error::Config(format!(
            "vocabulary cap {cap} leaves no room beyond the {} reserved tokens",
            RESERVED.len()
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in corpus {
        for t in r.interior() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(
            ranked
                .into_iter()
                .take(cap - RESERVED.len())
                .map(|(t, _)| t.to_string()),
        )
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Maps a report to exactly `max_len` ids: out-of-vocabulary tokens become
/// the unknown id, long reports are cut with the end id forced into the last
/// slot, short ones are padded.
pub fn encode_tokens(report: &CleanReport, vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len < 3 {
        return Err(Error::Config(format!("max_len {max_len} is below 3")));
    }
    let mut ids: Vec<usize> = report.tokens().iter().map(|t| vocab.id(t)).collect();
    if ids.len() > max_len {
        ids.truncate(max_len);
        ids[max_len - 1] = END_ID;
    }
    ids.resize(max_len, PAD_ID);
    Ok(ids)
}
