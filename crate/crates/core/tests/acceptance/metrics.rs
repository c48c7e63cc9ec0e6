use radgen_core::evaluation::{bleu, evaluate, Corpus, EmbeddingTable, BLEU_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::fail;
use crate::Outcome;

fn sentence(rng: &mut ChaCha8Rng, words: &[&str], len: usize) -> Vec<String> {
    (0..len)
        .map(|_| words[rng.random_range(0..words.len())].to_string())
        .collect()
}

fn count(haystack: &[String], gram: &[String]) -> u64 {
    if haystack.len() < gram.len() {
        return 0;
    }
    (0..=haystack.len() - gram.len())
        .filter(|&j| haystack[j..j + gram.len()] == *gram)
        .count() as u64
}

/// Brute-force corpus BLEU: clipped counts by direct scanning, precisions
/// multiplied and rooted.
fn oracle(hyps: &[Vec<String>], refs: &[Vec<String>], max_n: usize) -> Vec<f64> {
    let c: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    let mut product = 1.0;
    (1..=max_n)
        .map(|n| {
            let (mut matches, mut total) = (0u64, 0u64);
            for (h, rf) in hyps.iter().zip(refs) {
                if h.len() < n {
                    continue;
                }
                for i in 0..=h.len() - n {
                    total += 1;
                    let gram = &h[i..i + n];
                    let first = (0..i).all(|j| h[j..j + n] != *gram);
                    if first {
                        matches += count(h, gram).min(count(rf, gram));
                    }
                }
            }
            let num = if matches == 0 { BLEU_EPSILON } else { matches as f64 };
            let den = if total == 0 { 1.0 } else { total as f64 };
            product *= num / den;
            bp * product.powf(1.0 / n as f64)
        })
        .collect()
}

pub fn bleu_matches_brute_force() -> Outcome {
    let words = ["a", "b", "c", "d", "e", "f"];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let vocab = &words[..rng.random_range(2..=words.len())];
        let pairs = rng.random_range(1..=6);
        let hyps: Vec<Vec<String>> = (0..pairs)
            .map(|_| {
                let len = rng.random_range(0..=10);
                sentence(&mut rng, vocab, len)
            })
            .collect();
        let refs: Vec<Vec<String>> = (0..pairs)
            .map(|_| {
                let len = rng.random_range(1..=10);
                sentence(&mut rng, vocab, len)
            })
            .collect();
        let want = oracle(&hyps, &refs, 4);
        let corpus = Corpus::new(hyps, refs).map_err(fail("corpus"))?;
        let got = bleu(&corpus, 4).map_err(fail("bleu"))?;
        for (n, (g, w)) in got.iter().zip(&want).enumerate() {
            let diff = (g - w).abs();
            worst = worst.max(diff);
            if diff > 1e-9 {
                return Err(format!("corpus {case}, BLEU-{}: {g} vs oracle {w}", n + 1));
            }
        }
    }
    Ok(format!("200 corpora, BLEU-1..4 max abs difference {worst:.1e}"))
}

pub fn identities_hold() -> Outcome {
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let word_refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let table = EmbeddingTable::random_unit(&words, 8, 7).map_err(fail("table"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_disjoint = 0.0f64;
    for case in 0..50 {
        let pairs = rng.random_range(1..=5);
        let sentences: Vec<Vec<String>> = (0..pairs)
            .map(|_| {
                let len = rng.random_range(4..=12);
                sentence(&mut rng, &word_refs, len)
            })
            .collect();
        let same = Corpus::new(sentences.clone(), sentences.clone()).map_err(fail("corpus"))?;
        let report = evaluate(&same, &table).map_err(fail("evaluate"))?;
        let exact = [
            report.bleu_1,
            report.bleu_2,
            report.bleu_3,
            report.bleu_4,
            report.f1_embed,
        ];
        if exact.iter().any(|&v| v != 1.0) {
            return Err(format!("identical corpus {case}: BLEU-1..4 and F1 {exact:?}"));
        }
        let hyps: Vec<Vec<String>> = sentences
            .iter()
            .map(|s| sentence(&mut rng, &word_refs[..6], s.len()))
            .collect();
        let refs: Vec<Vec<String>> = sentences
            .iter()
            .map(|s| sentence(&mut rng, &word_refs[6..], s.len()))
            .collect();
        let disjoint = Corpus::new(hyps, refs).map_err(fail("corpus"))?;
        let b1 = bleu(&disjoint, 1).map_err(fail("bleu"))?[0];
        worst_disjoint = worst_disjoint.max(b1);
        if b1 > 1e-6 {
            return Err(format!("disjoint corpus {case}: BLEU-1 {b1}"));
        }
    }
    Ok(format!(
        "50 identical corpora give exactly 1.0; disjoint BLEU-1 at most {worst_disjoint:.1e}"
    ))
}
