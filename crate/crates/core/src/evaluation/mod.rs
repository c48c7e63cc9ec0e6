//! Text-generation metrics and significance testing.

mod bleu;
mod embedding;
mod ttest;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, brevity_penalty, corpus_counts, NgramCounts, BLEU_EPSILON};
pub use embedding::{
    cosine, embedding_f1, harmonic_mean, pair_scores, EmbeddingTable, UnknownPolicy, EMBEDDING_SUBSTITUTION_NOTE,
};
pub use ttest::{paired_t_test, TTestResult, DEFAULT_ALPHA};

use crate::{Error, Result};

/// Hypotheses paired one-to-one with references.
///
/// References must be non-empty. A hypothesis may be empty when a model
/// ends a report immediately; it then matches nothing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    hypotheses: Vec<Vec<String>>,
    references: Vec<Vec<String>>,
}

impl Corpus {
    pub fn new(hypotheses: Vec<Vec<String>>, references: Vec<Vec<String>>) -> Result<Self> {
        if hypotheses.len() != references.len() {
            return Err(Error::Data(format!(
                "{} hypotheses but {} references",
                hypotheses.len(),
                references.len()
            )));
        }
        if hypotheses.is_empty() {
            return Err(Error::Data("corpus is empty".into()));
        }
        if let Some(i) = references.iter().position(Vec::is_empty) {
            return Err(Error::Data(format!("reference {i} is empty")));
        }
        Ok(Self { hypotheses, references })
    }

    /// One whitespace-tokenized sequence per line on each side.
    pub fn from_lines(hypotheses: &str, references: &str) -> Result<Self> {
        let split = |s: &str| -> Vec<Vec<String>> {
            s.lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect()
        };
        Self::new(split(hypotheses), split(references))
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn hypotheses(&self) -> &[Vec<String>] {
        &self.hypotheses
    }

    pub fn references(&self) -> &[Vec<String>] {
        &self.references
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[String], &[String])> {
        self.hypotheses
            .iter()
            .zip(&self.references)
            .map(|(h, r)| (h.as_slice(), r.as_slice()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub p_embed: f64,
    pub r_embed: f64,
    pub f1_embed: f64,
    pub pairs: usize,
    pub embedding_note: String,
}

/// Metric names in [`EvaluationReport::metrics`] order.
pub const METRIC_NAMES: [&str; 7] = ["bleu_1", "bleu_2", "bleu_3", "bleu_4", "p_embed", "r_embed", "f1_embed"];

impl EvaluationReport {
    pub fn metrics(&self) -> [f64; 7] {
        [
            self.bleu_1,
            self.bleu_2,
            self.bleu_3,
            self.bleu_4,
            self.p_embed,
            self.r_embed,
            self.f1_embed,
        ]
    }
}

pub fn evaluate(corpus: &Corpus, table: &EmbeddingTable) -> Result<EvaluationReport> {
    let b = bleu(corpus, 4)?;
    let (p, r, f1) = embedding_f1(corpus, table)?;
    Ok(EvaluationReport {
        bleu_1: b[0],
        bleu_2: b[1],
        bleu_3: b[2],
        bleu_4: b[3],
        p_embed: p,
        r_embed: r,
        f1_embed: f1,
        pairs: corpus.len(),
        embedding_note: EMBEDDING_SUBSTITUTION_NOTE.to_string(),
    })
}

/// One row of a model comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `None` when the differences are degenerate.
    pub test: Option<TTestResult>,
}

/// Paired t-tests per metric over matched per-subset reports.
pub fn compare_reports(a: &[EvaluationReport], b: &[EvaluationReport], alpha: f64) -> Result<Vec<ComparisonRow>> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Config(format!(
            "comparison needs two equal-length lists of at least two subsets, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut rows = Vec::new();
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        let xa: Vec<f64> = a.iter().map(|r| r.metrics()[m]).collect();
        let xb: Vec<f64> = b.iter().map(|r| r.metrics()[m]).collect();
        let test = match paired_t_test(&xa, &xb, alpha) {
            Ok(t) => Some(t),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(ComparisonRow {
            metric: name.to_string(),
            mean_a: xa.iter().sum::<f64>() / xa.len() as f64,
            mean_b: xb.iter().sum::<f64>() / xb.len() as f64,
            test,
        });
    }
    Ok(rows)
}
