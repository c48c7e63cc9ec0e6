use radgen_core::dataset::{sample_subsets, synthesize_corpus, SynthSpec};
use radgen_core::demographics::DemographicFields;
use radgen_core::evaluation::{paired_t_test, DEFAULT_ALPHA};
use radgen_core::model::{init_parameters, ModelConfig};
use radgen_core::trainer::{evaluate_loss, fit, TrainConfig};
use rayon::prelude::*;

use crate::common::{encoder_for, examples, fail, greedy_bleu1, synthetic_subsets};
use crate::Outcome;

const MAX_LEN: usize = 20;

fn model(vocab: usize, feature_dim: usize, demographic_dim: usize) -> ModelConfig {
    ModelConfig {
        max_len: MAX_LEN,
        ..ModelConfig::tiny(vocab, feature_dim, demographic_dim)
    }
}

/// Sixteen synthetic examples; the model must memorize them.
pub fn overfits_sixteen_examples() -> Outcome {
    let spec = SynthSpec {
        examples_per_stratum: 4,
        ..SynthSpec::default()
    };
    let points = synthesize_corpus(&spec, 16).map_err(fail("synthesis"))?;
    let ids = sample_subsets(&points, 1, 16, 16).map_err(fail("subset"))?.remove(0);
    let encoder = encoder_for(&points)?;
    let data = examples(
        &points,
        [ids.as_slice(), &ids, &[]],
        DemographicFields::ALL,
        &encoder,
        MAX_LEN,
    )?;
    let cfg = ModelConfig {
        dropout_rate: 0.0,
        ..model(data.vocab.len(), spec.feature_dim, encoder.dim())
    };
    let train_cfg = TrainConfig {
        batch_size: 16,
        learning_rate: 3e-3,
        epochs: 300,
        seed: 4,
        patience: None,
        ..TrainConfig::default()
    };
    let params = init_parameters(&cfg, 4).map_err(fail("init"))?;
    let result = fit(&cfg, params, &data.train, &data.train, &train_cfg).map_err(fail("fit"))?;
    let loss = evaluate_loss(&cfg, &result.best, &data.train, 16).map_err(fail("loss"))?;
    let b1 = greedy_bleu1(&cfg, &result.best, &data.train, &data.vocab)?;
    let detail = format!(
        "mean token loss {loss:.4} (best epoch {}), greedy train BLEU-1 {b1:.4}",
        result.log.best_epoch
    );
    if loss < 0.1 && b1 >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Demographics-enriched versus features-only models on four balanced
/// subsets of the default synthetic corpus.
pub fn demographics_improve_bleu() -> Outcome {
    let spec = SynthSpec::default();
    let (points, splits) = synthetic_subsets(&spec, 5, 4, 500)?;
    let encoder = encoder_for(&points)?;
    let jobs: Vec<(usize, DemographicFields)> = (0..splits.len())
        .flat_map(|s| [(s, DemographicFields::ALL), (s, DemographicFields::NONE)])
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(s, fields)| {
            let [train, val, test] = &splits[s];
            let data = examples(&points, [train.as_slice(), val, test], fields, &encoder, MAX_LEN)?;
            let cfg = model(data.vocab.len(), spec.feature_dim, fields.dim(encoder.categories.len()));
            let train_cfg = TrainConfig {
                batch_size: 32,
                learning_rate: 2e-3,
                epochs: 40,
                seed: s as u64,
                patience: Some(5),
                ..TrainConfig::default()
            };
            let params = init_parameters(&cfg, 100 + s as u64).map_err(fail("init"))?;
            let result = fit(&cfg, params, &data.train, &data.val, &train_cfg).map_err(fail("fit"))?;
            greedy_bleu1(&cfg, &result.best, &data.test, &data.vocab)
        })
        .collect::<Result<_, String>>()?;
    let with: Vec<f64> = scores.iter().step_by(2).copied().collect();
    let without: Vec<f64> = scores.iter().skip(1).step_by(2).copied().collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gain = mean(&with) - mean(&without);
    let test = paired_t_test(&with, &without, DEFAULT_ALPHA).map_err(fail("t-test"))?;
    let detail = format!(
        "BLEU-1 with demographics {with:.3?}, baseline {without:.3?}, mean gain {gain:.4}, t {:.2}, p {:.2e}",
        test.t, test.p
    );
    if gain >= 0.03 && test.significant {
        Ok(detail)
    } else {
        Err(detail)
    }
}
