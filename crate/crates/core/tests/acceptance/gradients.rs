use radgen_core::model::{init_parameters, Forward, ModelConfig};
use radgen_core::text::{END_ID, PAD_ID, START_ID};
use radgen_core::trainer::{teacher_forcing_loss, Example};
use radgen_tensor::Parameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::fail;
use crate::Outcome;

const STEP: f64 = 1e-3;
const TOLERANCE: f64 = 1e-3;
/// Relative errors are taken against max(|analytic|, |numeric|, FLOOR).
const FLOOR: f64 = 1e-4;

fn config() -> ModelConfig {
    ModelConfig {
        feature_dim: 12,
        d_model: 16,
        d_embed: 16,
        d_ff: 32,
        n_heads: 2,
        vocab_size: 20,
        max_len: 8,
        demographic_dim: 7,
        n_decoder_blocks: 1,
        dropout_rate: 0.0,
    }
}

fn batch(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Vec<Example> {
    (0..3)
        .map(|i| {
            let body = 2 + 2 * i;
            let mut ids = vec![START_ID];
            ids.extend((0..body).map(|_| rng.random_range(4..cfg.vocab_size)));
            ids.push(END_ID);
            ids.resize(cfg.max_len, PAD_ID);
            let mut demographics = vec![(i % 2) as f32, rng.random_range(0.0..1.0)];
            demographics.extend((0..5).map(|c| if c == i { 1.0 } else { 0.0 }));
            Example {
                id: format!("g{i}"),
                features: (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                demographics,
                ids,
            }
        })
        .collect()
}

/// Loss value and ReLU activation pattern at `params`.
fn probe(cfg: &ModelConfig, params: &Parameters<f64>, batch: &[&Example]) -> (f64, Vec<bool>) {
    let mut f = Forward::new(cfg, params);
    let (loss, _) = teacher_forcing_loss(&mut f, batch, false).expect("forward pass");
    (f.tape.value(loss).values()[0], f.tape.activation_pattern())
}

/// Central differences against reverse mode for every coordinate of every
/// parameter, in f64. Coordinates whose stencil crosses a ReLU kink are
/// skipped and counted.
pub fn all_parameters_match_finite_differences() -> Outcome {
    let cfg = config();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut params = init_parameters::<f64>(&cfg, 4).map_err(fail("init"))?;
    // move gains and biases off their initial constants
    for (_, t) in params.iter_mut() {
        for v in t.values_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let examples = batch(&cfg, &mut rng);
    let refs: Vec<&Example> = examples.iter().collect();
    let analytic = {
        let mut f = Forward::new(&cfg, &params);
        let (loss, _) = teacher_forcing_loss(&mut f, &refs, false).map_err(fail("forward"))?;
        f.tape.backward(loss).map_err(fail("backward"))?;
        f.gradients()
    };
    let (_, base_pattern) = probe(&cfg, &params, &refs);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let (mut worst, mut worst_at) = (0.0f64, String::new());
    let (mut checked, mut skipped) = (0usize, 0usize);
    for name in &names {
        let n = params.get(name).expect("named parameter").numel();
        let grad = &analytic[name.as_str()];
        for i in 0..n {
            let original = params.get(name).expect("named parameter").values()[i];
            params.get_mut(name).expect("named parameter").values_mut()[i] = original + STEP;
            let (up, up_pattern) = probe(&cfg, &params, &refs);
            params.get_mut(name).expect("named parameter").values_mut()[i] = original - STEP;
            let (down, down_pattern) = probe(&cfg, &params, &refs);
            params.get_mut(name).expect("named parameter").values_mut()[i] = original;
            if up_pattern != base_pattern || down_pattern != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * STEP);
            let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(FLOOR);
            checked += 1;
            if err > worst {
                worst = err;
                worst_at = format!("{name}[{i}] analytic {:.6e} numeric {numeric:.6e}", grad[i]);
            }
        }
    }
    let total = checked + skipped;
    let detail = format!(
        "{} tensors, {checked} of {total} coordinates checked ({skipped} on ReLU kinks), max rel err {worst:.2e}",
        names.len()
    );
    if worst >= TOLERANCE {
        return Err(format!("{detail} at {worst_at}"));
    }
    if skipped * 100 > total {
        return Err(format!("{detail}; too many kink crossings"));
    }
    Ok(detail)
}
