use radgen_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::stack_rows;
use super::{Forward, ModelConfig, ModelParameters};
use crate::text::{END_ID, PAD_ID, START_ID};
use crate::{Error, Result};

/// Report generation defaults to this sampling temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.5;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Draws from `softmax(logits / temperature)`; zero temperature is argmax.
pub fn sample_token<R: Rng + ?Sized>(logits: &[f32], temperature: f64, rng: &mut R) -> usize {
    if temperature == 0.0 {
        return argmax(logits);
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let weights: Vec<f64> = logits.iter().map(|&l| ((l as f64 - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    argmax(logits)
}

/// Autoregressive decoding for a batch of inputs.
///
/// Each sequence starts from the start id and stops after emitting the end
/// id or after `max_len - 1` tokens. Returned ids exclude the start id and
/// include the end id when it was produced. The pad and start ids are never
/// sampled. Example `i` draws from ChaCha8 stream `i` under `seed`, so
/// results do not depend on batching.
pub fn generate_batch(
    cfg: &ModelConfig,
    params: &ModelParameters,
    features: &[&[f32]],
    demographics: &[&[f32]],
    temperature: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    generate_streams(cfg, params, features, demographics, temperature, seed, 0)
}

/// [`generate_batch`] where example `i` uses stream `first_stream + i`, so a
/// long input list can be decoded in chunks with the same result.
pub fn generate_streams(
    cfg: &ModelConfig,
    params: &ModelParameters,
    features: &[&[f32]],
    demographics: &[&[f32]],
    temperature: f64,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<Vec<usize>>> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature {temperature} must be finite and non-negative"
        )));
    }
    let n = features.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let hybrid: Tensor = {
        let feats = stack_rows(features, cfg.feature_dim, "generate")?;
        let demo = if cfg.is_baseline() {
            None
        } else {
            if demographics.len() != n {
                return Err(Error::Data(format!(
                    "{n} feature rows but {} demographic rows",
                    demographics.len()
                )));
            }
            Some(stack_rows(demographics, cfg.demographic_dim, "generate")?)
        };
        let mut f = Forward::new(cfg, params);
        let h = f.encode(feats, demo)?;
        f.tape.value(h).clone()
    };
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(first_stream + i as u64);
            r
        })
        .collect();
    let mut prefixes: Vec<Vec<usize>> = vec![vec![START_ID]; n];
    let mut done = vec![false; n];
    while prefixes[0].len() < cfg.max_len && done.iter().any(|d| !d) {
        let len = prefixes[0].len();
        let mut f = Forward::new(cfg, params);
        let h = f.tape.constant(&hybrid);
        let logits = f.decode(&prefixes, h)?;
        let logits = f.tape.value(logits);
        for i in 0..n {
            let next = if done[i] {
                PAD_ID
            } else {
                let mut row = logits.row(i * len + len - 1).to_vec();
                row[PAD_ID] = f32::NEG_INFINITY;
                row[START_ID] = f32::NEG_INFINITY;
                let t = sample_token(&row, temperature, &mut rngs[i]);
                done[i] = t == END_ID;
                t
            };
            prefixes[i].push(next);
        }
    }
    Ok(prefixes
        .into_iter()
        .map(|p| p.into_iter().skip(1).take_while(|&t| t != PAD_ID).collect())
        .collect())
}

/// Generates one report; see [`generate_batch`].
pub fn generate(
    cfg: &ModelConfig,
    params: &ModelParameters,
    features: &[f32],
    demographics: &[f32],
    temperature: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    Ok(generate_batch(cfg, params, &[features], &[demographics], temperature, seed)?.remove(0))
}
