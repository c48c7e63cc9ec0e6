use radgen_core::dataset::{sample_subsets, split, synthesize_corpus, DataPoint, SynthSpec};
use radgen_core::demographics::{select_top_categories, DemographicEncoder, DemographicFields, DemographicRecord};
use radgen_core::evaluation::{bleu, Corpus};
use radgen_core::model::{ModelConfig, ModelParameters};
use radgen_core::text::{build_vocabulary, CleanReport, Vocabulary, DEFAULT_VOCAB_CAP};
use radgen_core::trainer::{generate_reports, Example};

/// Turns an error into an acceptance failure message.
pub fn fail<E: std::fmt::Display>(what: &'static str) -> impl Fn(E) -> String {
    move |e| format!("{what}: {e}")
}

pub struct Split {
    pub vocab: Vocabulary,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Encoder over the most frequent ethnicities of `points`.
pub fn encoder_for(points: &[DataPoint]) -> Result<DemographicEncoder, String> {
    let records: Vec<DemographicRecord> = points.iter().map(|p| p.demographics.clone()).collect();
    let top = select_top_categories(&records, 5).map_err(fail("categories"))?;
    DemographicEncoder::with_default_bounds(top.categories).map_err(fail("encoder"))
}

/// Examples for the given ids, with a vocabulary built from the train part.
pub fn examples(
    points: &[DataPoint],
    ids: [&[String]; 3],
    fields: DemographicFields,
    encoder: &DemographicEncoder,
    max_len: usize,
) -> Result<Split, String> {
    let by_id: std::collections::HashMap<&str, &DataPoint> = points.iter().map(|p| (p.id.as_str(), p)).collect();
    let pick = |ids: &[String]| -> Vec<&DataPoint> { ids.iter().map(|id| by_id[id.as_str()]).collect() };
    let train_reports: Vec<CleanReport> = pick(ids[0]).iter().map(|p| p.report.clone()).collect();
    let vocab = build_vocabulary(&train_reports, DEFAULT_VOCAB_CAP).map_err(fail("vocabulary"))?;
    let convert = |ids: &[String]| -> Result<Vec<Example>, String> {
        radgen_core::dataset::to_examples(&pick(ids), &vocab, encoder, fields, max_len).map_err(fail("examples"))
    };
    Ok(Split {
        train: convert(ids[0])?,
        val: convert(ids[1])?,
        test: convert(ids[2])?,
        vocab,
    })
}

/// Synthetic corpus, `k` balanced subsets of `size` and their splits.
pub fn synthetic_subsets(
    spec: &SynthSpec,
    seed: u64,
    k: usize,
    size: usize,
) -> Result<(Vec<DataPoint>, Vec<[Vec<String>; 3]>), String> {
    let points = synthesize_corpus(spec, seed).map_err(fail("synthesis"))?;
    let subsets = sample_subsets(&points, k, size, seed).map_err(fail("subsets"))?;
    let splits = subsets
        .iter()
        .enumerate()
        .map(|(i, ids)| {
            let m = split(i, ids, seed).map_err(fail("split"))?;
            Ok([m.train, m.val, m.test])
        })
        .collect::<Result<_, String>>()?;
    Ok((points, splits))
}

/// Reference token sequences of `examples`.
pub fn references(examples: &[Example], vocab: &Vocabulary) -> Vec<Vec<String>> {
    examples.iter().map(|e| vocab.decode(&e.ids)).collect()
}

/// Greedy-decoded corpus BLEU-1 against the examples' own reports.
pub fn greedy_bleu1(
    cfg: &ModelConfig,
    params: &ModelParameters,
    examples: &[Example],
    vocab: &Vocabulary,
) -> Result<f64, String> {
    let hyps = generate_reports(cfg, params, examples, vocab, 0.0, 0, 64).map_err(fail("generation"))?;
    let corpus = Corpus::new(hyps, references(examples, vocab)).map_err(fail("corpus"))?;
    Ok(bleu(&corpus, 1).map_err(fail("bleu"))?[0])
}
