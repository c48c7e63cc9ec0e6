//! Corpus-level BLEU.
//!
//! Clipped n-gram matches and candidate n-gram totals are summed over the
//! whole corpus before dividing. A zero match count is replaced by `1e-9`
//! and a zero candidate total by 1, so every precision is positive and the
//! geometric mean is defined. The brevity penalty is `exp(1 - r/c)` when the
//! total candidate length `c` is below the total reference length `r`.

use std::collections::HashMap;

use super::Corpus;

pub const BLEU_EPSILON: f64 = 1e-9;

/// Clipped matches and candidate totals for one order over the corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NgramCounts {
    pub matches: u64,
    pub total: u64,
}

impl NgramCounts {
    pub fn precision(self) -> f64 {
        let num = if self.matches == 0 {
            BLEU_EPSILON
        } else {
            self.matches as f64
        };
        let den = if self.total == 0 { 1.0 } else { self.total as f64 };
        num / den
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Per-order counts for orders `1..=max_n`.
pub fn corpus_counts(corpus: &Corpus, max_n: usize) -> Vec<NgramCounts> {
    let mut out = vec![NgramCounts::default(); max_n];
    for (hyp, reference) in corpus.pairs() {
        for (i, slot) in out.iter_mut().enumerate() {
            let n = i + 1;
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            for (gram, &c) in &h {
                slot.matches += c.min(r.get(gram).copied().unwrap_or(0));
            }
            slot.total += (hyp.len() + 1).saturating_sub(n) as u64;
        }
    }
    out
}

pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len < reference_len {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    } else {
        1.0
    }
}

/// BLEU-1 through BLEU-`max_n` with uniform weights.
pub fn bleu(corpus: &Corpus, max_n: usize) -> crate::Result<Vec<f64>> {
    if max_n == 0 {
        return Err(crate::Error::Config("BLEU order must be at least 1".into()));
    }
    let counts = corpus_counts(corpus, max_n);
    let c: usize = corpus.hypotheses().iter().map(Vec::len).sum();
    let r: usize = corpus.references().iter().map(Vec::len).sum();
    let bp = brevity_penalty(c, r);
    let mut log_sum = 0.0;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, k)| {
            log_sum += k.precision().ln();
            bp * (log_sum / (i + 1) as f64).exp()
        })
        .collect())
}
