use radgen_tensor::{Parameters, Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::Result;

/// Named learnable tensors of one model.
pub type ModelParameters<T = f32> = Parameters<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Glorot,
    Zeros,
    Ones,
}

fn attention_shapes(prefix: &str, d: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    for proj in ["q", "k", "v", "o"] {
        out.push((format!("{prefix}.{proj}.weight"), vec![d, d], Init::Glorot));
        out.push((format!("{prefix}.{proj}.bias"), vec![d], Init::Zeros));
    }
}

fn norm_shapes(prefix: &str, d: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    out.push((format!("{prefix}.gain"), vec![d], Init::Ones));
    out.push((format!("{prefix}.bias"), vec![d], Init::Zeros));
}

fn linear_shapes(prefix: &str, d_in: usize, d_out: usize, out: &mut Vec<(String, Vec<usize>, Init)>) {
    out.push((format!("{prefix}.weight"), vec![d_in, d_out], Init::Glorot));
    out.push((format!("{prefix}.bias"), vec![d_out], Init::Zeros));
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let mut out = Vec::new();
    norm_shapes("visual.norm", cfg.feature_dim, &mut out);
    linear_shapes("visual.ff", cfg.feature_dim, d, &mut out);
    attention_shapes("visual.mha", d, &mut out);
    norm_shapes("visual.out_norm", d, &mut out);
    if !cfg.is_baseline() {
        linear_shapes("semantic.fc", cfg.demographic_dim, d, &mut out);
        attention_shapes("fusion.mha", d, &mut out);
        norm_shapes("fusion.norm", d, &mut out);
    }
    out.push((
        "decoder.embedding".into(),
        vec![cfg.vocab_size, cfg.d_embed],
        Init::Glorot,
    ));
    if cfg.d_embed != d {
        linear_shapes("decoder.embed_proj", cfg.d_embed, d, &mut out);
    }
    for i in 0..cfg.n_decoder_blocks {
        let p = format!("decoder.{i}");
        attention_shapes(&format!("{p}.self_attn"), d, &mut out);
        norm_shapes(&format!("{p}.norm1"), d, &mut out);
        attention_shapes(&format!("{p}.cross_attn"), d, &mut out);
        norm_shapes(&format!("{p}.norm2"), d, &mut out);
        linear_shapes(&format!("{p}.ff1"), d, cfg.d_ff, &mut out);
        linear_shapes(&format!("{p}.ff2"), cfg.d_ff, d, &mut out);
        norm_shapes(&format!("{p}.norm3"), d, &mut out);
    }
    linear_shapes("classifier", d, cfg.vocab_size, &mut out);
    out
}

/// Ordered `(name, shape)` list of every parameter for `cfg`.
///
/// Multi-head projections are stored as `d_model × d_model` matrices; head
/// `h` owns columns `h·d_head .. (h+1)·d_head`.
pub fn parameter_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Glorot-uniform weights, zero biases and unit gains from a seeded stream.
pub fn init_parameters<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParameters<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::new();
    for (name, shape, init) in layout(cfg) {
        let n: usize = shape.iter().product();
        let values = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Glorot => {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect()
            }
        };
        params.insert(name, Tensor::new(shape, values)?)?;
    }
    Ok(params)
}

/// Checks that `params` holds exactly the names and shapes `cfg` implies.
pub fn check_parameters<T: Scalar>(cfg: &ModelConfig, params: &ModelParameters<T>) -> Result<()> {
    let expected = parameter_shapes(cfg);
    if expected.len() != params.len() {
        return Err(crate::Error::Config(format!(
            "configuration implies {} parameters, found {}",
            expected.len(),
            params.len()
        )));
    }
    for (name, shape) in expected {
        match params.get(&name) {
            Some(t) if t.shape() == shape.as_slice() => {}
            Some(t) => {
                return Err(crate::Error::Config(format!(
                    "parameter {name} has shape {:?}, configuration implies {shape:?}",
                    t.shape()
                )))
            }
            None => return Err(crate::Error::Config(format!("parameter {name} is missing"))),
        }
    }
    Ok(())
}
