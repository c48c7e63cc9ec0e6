//! Greedy-matching embedding similarity over a static token table.
//!
//! Each hypothesis token is matched to its most similar reference token by
//! cosine similarity and vice versa. Pair precision and recall are the means
//! of those maxima; corpus values average over pairs. This stands in for
//! contextual-model scoring: the algorithm is the same, the embeddings are a
//! fixed lookup table.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Corpus;
use crate::{Error, Result};

/// Stated in every evaluation output that carries embedding scores.
pub const EMBEDDING_SUBSTITUTION_NOTE: &str =
    "embedding precision/recall/F1 use greedy cosine matching over a static token embedding table, not a pretrained contextual language model";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Unknown tokens are an error.
    #[default]
    Reject,
    /// Unknown tokens get a zero vector and match nothing.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    pub unknown: UnknownPolicy,
}

impl EmbeddingTable {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>, unknown: UnknownPolicy) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (token, v) in entries {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Config(format!(
                        "embedding for {token:?} has {} values, expected {d}",
                        v.len()
                    )))
                }
                _ => {}
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("embedding for {token:?} is not finite")));
            }
            vectors.insert(token, v);
        }
        let dim = dim
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Config("embedding table is empty".into()))?;
        Ok(Self { dim, vectors, unknown })
    }

    /// Lines of `token v1 v2 ...`; blank lines and `#` comments ignored.
    pub fn parse(text: &str, unknown: UnknownPolicy) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line").to_string();
            let v = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("embedding line {}: {e}", n + 1)))?;
            entries.push((token, v));
        }
        Self::new(entries, unknown)
    }

    pub fn load(path: &Path, unknown: UnknownPolicy) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?, unknown)
    }

    /// Seeded random unit vectors, one per token.
    pub fn random_unit<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = tokens.iter().map(|t| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (t.as_ref().to_string(), v.into_iter().map(|x| x / norm).collect())
        });
        Self::new(entries, UnknownPolicy::Zero)
    }

    /// Random unit vectors seeded by each token's SHA-256 and `seed`, so
    /// tables built over different token sets agree on shared tokens.
    pub fn hashed_unit<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Self> {
        let entries = tokens.iter().map(|t| {
            let d = Sha256::digest(t.as_ref().as_bytes());
            let key = u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"));
            let mut rng = ChaCha8Rng::seed_from_u64(key ^ seed);
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (t.as_ref().to_string(), v.into_iter().map(|x| x / norm).collect())
        });
        Self::new(entries, UnknownPolicy::Zero)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    fn lookup(&self, token: &str) -> Result<Option<&[f64]>> {
        match (self.vectors.get(token), self.unknown) {
            (Some(v), _) => Ok(Some(v)),
            (None, UnknownPolicy::Zero) => Ok(None),
            (None, UnknownPolicy::Reject) => Err(Error::Data(format!("token {token:?} has no embedding"))),
        }
    }
}

/// Cosine similarity; zero vectors score 0 and identical vectors exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn greedy(from: &[Option<&[f64]>], to: &[Option<&[f64]>]) -> f64 {
    if from.is_empty() || to.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for a in from {
        let best = to
            .iter()
            .map(|b| match (a, b) {
                (Some(a), Some(b)) => cosine(a, b),
                _ => 0.0,
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    total / from.len() as f64
}

/// Greedy-matching scores of one hypothesis against one reference.
pub fn pair_scores(hyp: &[String], reference: &[String], table: &EmbeddingTable) -> Result<(f64, f64)> {
    let h = hyp.iter().map(|t| table.lookup(t)).collect::<Result<Vec<_>>>()?;
    let r = reference.iter().map(|t| table.lookup(t)).collect::<Result<Vec<_>>>()?;
    Ok((greedy(&h, &r), greedy(&r, &h)))
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Corpus precision, recall and F1.
pub fn embedding_f1(corpus: &Corpus, table: &EmbeddingTable) -> Result<(f64, f64, f64)> {
    let (mut p, mut r) = (0.0, 0.0);
    for (hyp, reference) in corpus.pairs() {
        let (pp, rr) = pair_scores(hyp, reference, table)?;
        p += pp;
        r += rr;
    }
    let n = corpus.len() as f64;
    let (p, r) = (p / n, r / n);
    Ok((p, r, harmonic_mean(p, r)))
}
