use radgen_core::model::{init_parameters, Forward, ModelConfig, ModelParameters};
use radgen_core::text::START_ID;
use radgen_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::fail;
use crate::Outcome;

fn logits(cfg: &ModelConfig, params: &ModelParameters, feats: &Tensor, demo: &Tensor, prefix: &[usize]) -> Vec<u32> {
    let mut f = Forward::new(cfg, params);
    let h = f.encode(feats.clone(), Some(demo.clone())).expect("encode");
    let out = f.decode(&[prefix.to_vec()], h).expect("decode");
    f.tape.value(out).values().iter().map(|v| v.to_bits()).collect()
}

/// For 100 random prefixes and every position `p`, replacing the token at
/// `p` leaves the logits of positions `< p` bit-identical.
pub fn future_tokens_do_not_leak() -> Outcome {
    let cfg = ModelConfig {
        n_decoder_blocks: 2,
        ..ModelConfig::tiny(30, 10, 7)
    };
    let params = init_parameters(&cfg, 31).map_err(fail("init"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut perturbations = 0;
    for case in 0..100 {
        let len = rng.random_range(2..=cfg.max_len);
        let mut prefix = vec![START_ID];
        prefix.extend((1..len).map(|_| rng.random_range(0..cfg.vocab_size)));
        let feats = Tensor::new(
            vec![1, cfg.feature_dim],
            (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .map_err(fail("features"))?;
        let demo = Tensor::new(
            vec![1, 7],
            vec![1.0, rng.random_range(0.0..1.0), 0.0, 1.0, 0.0, 0.0, 0.0],
        )
        .map_err(fail("demographics"))?;
        let base = logits(&cfg, &params, &feats, &demo, &prefix);
        for p in 1..len {
            let mut changed = prefix.clone();
            while changed[p] == prefix[p] {
                changed[p] = rng.random_range(0..cfg.vocab_size);
            }
            let after = logits(&cfg, &params, &feats, &demo, &changed);
            let past = p * cfg.vocab_size;
            if base[..past] != after[..past] {
                return Err(format!("case {case}: changing position {p} altered earlier logits"));
            }
            if base[past..] == after[past..] {
                return Err(format!("case {case}: changing position {p} had no effect at all"));
            }
            perturbations += 1;
        }
    }
    Ok(format!(
        "100 prefixes, {perturbations} single-token perturbations, past logits bit-identical"
    ))
}
