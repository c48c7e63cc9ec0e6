use std::fs;

use radgen_core::dataset::SynthSpec;
use radgen_core::demographics::DemographicFields;
use radgen_core::model::{
    init_parameters, load_checkpoint, save_checkpoint, ModelConfig, ModelParameters, DEFAULT_TEMPERATURE,
    MANIFEST_FILE, PARAMS_FILE,
};
use radgen_core::text::Vocabulary;
use radgen_core::trainer::{fit, generate_reports, parameter_checksum, Example, TrainConfig};
use radgen_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{encoder_for, examples, fail, synthetic_subsets};
use crate::Outcome;

fn same_bits(a: &ModelParameters, b: &ModelParameters) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((na, ta), (nb, tb))| {
            na == nb
                && ta.shape() == tb.shape()
                && ta
                    .values()
                    .iter()
                    .zip(tb.values())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

fn reports(
    cfg: &ModelConfig,
    params: &ModelParameters,
    test: &[Example],
    vocab: &Vocabulary,
) -> Result<Vec<Vec<String>>, String> {
    generate_reports(cfg, params, test, vocab, DEFAULT_TEMPERATURE, 9, 8).map_err(fail("generate"))
}

/// Fixed-seed training twice, checkpoint round trip, then single-byte
/// corruption of both checkpoint files.
pub fn round_trip_and_corruption() -> Outcome {
    let spec = SynthSpec {
        examples_per_stratum: 20,
        feature_dim: 64,
        ..SynthSpec::default()
    };
    let (points, splits) = synthetic_subsets(&spec, 9, 1, 100)?;
    let encoder = encoder_for(&points)?;
    let [train, val, test] = &splits[0];
    let data = examples(
        &points,
        [train.as_slice(), val, test],
        DemographicFields::ALL,
        &encoder,
        20,
    )?;
    let cfg = ModelConfig {
        max_len: 20,
        ..ModelConfig::tiny(data.vocab.len(), spec.feature_dim, encoder.dim())
    };
    let train_cfg = TrainConfig {
        batch_size: 16,
        learning_rate: 3e-3,
        epochs: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || -> Result<_, String> {
        let params = init_parameters(&cfg, 9).map_err(fail("init"))?;
        fit(&cfg, params, &data.train, &data.val, &train_cfg).map_err(fail("fit"))
    };
    let (a, b) = (run()?, run()?);
    if !a.log.same_trajectory(&b.log) || !same_bits(&a.best, &b.best) {
        return Err("two fixed-seed runs diverged".into());
    }
    let dir = tempfile::tempdir().map_err(fail("tempdir"))?;
    let manifest = save_checkpoint(dir.path(), &cfg, &a.best).map_err(fail("save"))?;
    let (loaded, loaded_cfg) = load_checkpoint(dir.path()).map_err(fail("load"))?;
    if loaded_cfg != cfg || !same_bits(&loaded, &a.best) {
        return Err("loaded checkpoint differs from the saved parameters".into());
    }
    let before = reports(&cfg, &a.best, &data.test, &data.vocab)?;
    let after = reports(&loaded_cfg, &loaded, &data.test, &data.vocab)?;
    if before != after {
        return Err("reports changed across save and load".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let blob_path = dir.path().join(PARAMS_FILE);
    let blob = fs::read(&blob_path).map_err(fail("read blob"))?;
    let flips = 400;
    for _ in 0..flips {
        let at = rng.random_range(0..blob.len());
        let mut bad = blob.clone();
        bad[at] ^= rng.random_range(1..=255u8);
        fs::write(&blob_path, &bad).map_err(fail("write"))?;
        let owner = manifest
            .tensors
            .iter()
            .find(|t| (t.offset..t.offset + t.bytes).contains(&(at as u64)))
            .map(|t| t.name.as_str())
            .unwrap_or("");
        match load_checkpoint(dir.path()) {
            Err(Error::Integrity { tensor, .. }) if tensor == owner => {}
            other => return Err(format!("flip at byte {at} of {owner}: {:?}", other.map(|_| ()))),
        }
    }
    fs::write(&blob_path, &blob).map_err(fail("restore"))?;

    let manifest_path = dir.path().join(MANIFEST_FILE);
    let text = fs::read(&manifest_path).map_err(fail("read manifest"))?;
    let (mut detected, mut benign) = (0, 0);
    for at in 0..text.len() {
        let mut bad = text.clone();
        bad[at] ^= 1 << rng.random_range(0..8);
        fs::write(&manifest_path, &bad).map_err(fail("write"))?;
        match load_checkpoint(dir.path()) {
            Err(_) => detected += 1,
            // a flip that leaves the parsed manifest unchanged (whitespace) is harmless
            Ok((p, c)) if c == cfg && same_bits(&p, &a.best) => benign += 1,
            Ok(_) => return Err(format!("manifest flip at byte {at} loaded a different checkpoint")),
        }
    }
    fs::write(&manifest_path, &text).map_err(fail("restore"))?;
    Ok(format!(
        "{} epochs reproduced (checksum {}), {} reports identical after reload, {flips}/{flips} blob flips named their tensor, {detected} manifest flips rejected and {benign} harmless",
        a.log.epochs.len(),
        &parameter_checksum(&a.best)[..12],
        before.len()
    ))
}
