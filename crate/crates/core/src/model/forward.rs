use std::collections::HashMap;

use radgen_tensor::{AttentionLayout, Gradients, Scalar, Tape, Tensor, TensorError, Var, LAYER_NORM_EPS};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelParameters};
use crate::text::PAD_ID;
use crate::{Error, Result};

/// Fixed sinusoidal position table, `[len × d]`.
pub fn positional_encoding<T: Scalar>(len: usize, d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            out.push(T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    out
}

/// One forward pass recorded on a tape.
///
/// Parameters are borrowed into the tape on first use, so building a pass
/// never copies weights. Dropout is active only when constructed with
/// [`Forward::training`].
pub struct Forward<'a, T: Scalar = f32> {
    cfg: &'a ModelConfig,
    params: &'a ModelParameters<T>,
    pub tape: Tape<'a, T>,
    vars: HashMap<&'a str, Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'a, T: Scalar> Forward<'a, T> {
    pub fn new(cfg: &'a ModelConfig, params: &'a ModelParameters<T>) -> Self {
        Self {
            cfg,
            params,
            tape: Tape::new(),
            vars: HashMap::new(),
            dropout: None,
        }
    }

    pub fn training(cfg: &'a ModelConfig, params: &'a ModelParameters<T>, rng: ChaCha8Rng) -> Self {
        let mut f = Self::new(cfg, params);
        if cfg.dropout_rate > 0.0 {
            f.dropout = Some((cfg.dropout_rate, rng));
        }
        f
    }

    pub fn config(&self) -> &'a ModelConfig {
        self.cfg
    }

    /// Tape variable of a named parameter.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let (key, tensor) = self
            .params
            .iter()
            .find(|(k, _)| *k == name)
            .ok_or_else(|| Error::Config(format!("model has no parameter {name}")))?;
        let v = self.tape.param(tensor);
        self.vars.insert(key, v);
        Ok(v)
    }

    /// Gradients of every parameter after `tape.backward`; parameters the
    /// pass never touched get zeros.
    pub fn gradients(&self) -> Gradients<T> {
        self.params
            .iter()
            .map(|(name, t)| {
                let g = self
                    .vars
                    .get(name)
                    .and_then(|&v| self.tape.grad(v))
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); t.numel()]);
                (name.to_string(), g)
            })
            .collect()
    }

    fn drop(&mut self, x: Var) -> Result<Var> {
        match &mut self.dropout {
            Some((rate, rng)) => Ok(self.tape.dropout(x, *rate, rng)?),
            None => Ok(x),
        }
    }

    fn linear(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let w = self.param(&format!("{prefix}.weight"))?;
        let b = self.param(&format!("{prefix}.bias"))?;
        Ok(self.tape.linear(x, w, b)?)
    }

    fn norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let g = self.param(&format!("{prefix}.gain"))?;
        let b = self.param(&format!("{prefix}.bias"))?;
        Ok(self.tape.layer_norm(x, g, b, LAYER_NORM_EPS)?)
    }

    /// Multi-head attention with Q from `xq` and K, V from `xkv`.
    pub fn mha(
        &mut self,
        xq: Var,
        xkv: Var,
        prefix: &str,
        layout: AttentionLayout,
        mask: Option<Vec<bool>>,
    ) -> Result<Var> {
        let q = self.linear(xq, &format!("{prefix}.q"))?;
        let k = self.linear(xkv, &format!("{prefix}.k"))?;
        let v = self.linear(xkv, &format!("{prefix}.v"))?;
        let a = self.tape.attention(q, k, v, layout, mask)?;
        self.linear(a, &format!("{prefix}.o"))
    }

    fn single_layout(&self, batches: usize) -> AttentionLayout {
        AttentionLayout {
            batches,
            q_len: 1,
            kv_len: 1,
            heads: self.cfg.n_heads,
        }
    }

    /// Visual Unit: `[B × feature_dim]` features to `[B × d_model]`.
    pub fn visual_encode(&mut self, features: Var) -> Result<Var> {
        let shape = self.tape.value(features).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.cfg.feature_dim {
            return Err(TensorError::ShapeMismatch {
                op: "visual_encode",
                left: shape,
                right: vec![self.cfg.feature_dim],
            }
            .into());
        }
        let n = self.norm(features, "visual.norm")?;
        let h = self.linear(n, "visual.ff")?;
        let h = self.tape.relu(h)?;
        let a = self.mha(h, h, "visual.mha", self.single_layout(shape[0]), None)?;
        let a = self.drop(a)?;
        let r = self.tape.add(h, a)?;
        self.norm(r, "visual.out_norm")
    }

    /// Semantic Unit: `[B × demographic_dim]` to `[B × d_model]`.
    pub fn semantic_encode(&mut self, demographics: Var) -> Result<Var> {
        let shape = self.tape.value(demographics).shape().to_vec();
        if self.cfg.is_baseline() || shape.len() != 2 || shape[1] != self.cfg.demographic_dim {
            return Err(TensorError::ShapeMismatch {
                op: "semantic_encode",
                left: shape,
                right: vec![self.cfg.demographic_dim],
            }
            .into());
        }
        self.linear(demographics, "semantic.fc")
    }

    /// Visual-semantic attention: queries from the image, keys and values
    /// from the demographic projection, residual from the image.
    pub fn fuse(&mut self, visual: Var, semantic: Var) -> Result<Var> {
        let (vs, ss) = (self.tape.value(visual).shape(), self.tape.value(semantic).shape());
        if vs != ss {
            return Err(TensorError::ShapeMismatch {
                op: "fuse",
                left: vs.to_vec(),
                right: ss.to_vec(),
            }
            .into());
        }
        let batches = vs[0];
        let a = self.mha(visual, semantic, "fusion.mha", self.single_layout(batches), None)?;
        let a = self.drop(a)?;
        let r = self.tape.add(visual, a)?;
        self.norm(r, "fusion.norm")
    }

    /// Hybrid representation for a batch. `demographics` is ignored by the
    /// baseline and required otherwise.
    pub fn encode(&mut self, features: Tensor<T>, demographics: Option<Tensor<T>>) -> Result<Var> {
        let f = self.tape.leaf(features);
        let visual = self.visual_encode(f)?;
        if self.cfg.is_baseline() {
            return Ok(visual);
        }
        let demo = demographics.ok_or_else(|| Error::Config("model expects demographic inputs".into()))?;
        let d = self.tape.leaf(demo);
        let semantic = self.semantic_encode(d)?;
        self.fuse(visual, semantic)
    }

    /// Logits `[B·T × vocab]` for equal-length id sequences attending to a
    /// `[B × d_model]` hybrid representation.
    pub fn decode(&mut self, ids: &[Vec<usize>], hybrid: Var) -> Result<Var> {
        let cfg = self.cfg;
        let batches = ids.len();
        let len = ids.first().map_or(0, Vec::len);
        if batches == 0 || len == 0 {
            return Err(TensorError::Contract("empty decoder input".into()).into());
        }
        if ids.iter().any(|s| s.len() != len) {
            return Err(TensorError::Contract("decoder sequences differ in length".into()).into());
        }
        if len > cfg.max_len {
            return Err(TensorError::Contract(format!("sequence length {len} exceeds max_len {}", cfg.max_len)).into());
        }
        if let Some(&bad) = ids.iter().flatten().find(|&&id| id >= cfg.vocab_size) {
            return Err(TensorError::IndexOutOfRange {
                op: "decode",
                index: bad,
                bound: cfg.vocab_size,
            }
            .into());
        }
        let hs = self.tape.value(hybrid).shape();
        if hs != [batches, cfg.d_model] {
            return Err(TensorError::ShapeMismatch {
                op: "decode",
                left: hs.to_vec(),
                right: vec![batches, cfg.d_model],
            }
            .into());
        }

        let flat: Vec<usize> = ids.iter().flatten().copied().collect();
        let table = self.param("decoder.embedding")?;
        let emb = self.tape.gather(table, &flat)?;
        let pe = positional_encoding::<T>(len, cfg.d_embed);
        let pe: Vec<T> = pe.iter().copied().cycle().take(batches * len * cfg.d_embed).collect();
        let pe = self.tape.leaf(Tensor::new(vec![batches * len, cfg.d_embed], pe)?);
        let mut x = self.tape.add(emb, pe)?;
        if cfg.d_embed != cfg.d_model {
            x = self.linear(x, "decoder.embed_proj")?;
        }
        x = self.drop(x)?;

        // causal, and pad keys hidden except a position's own slot
        let mut mask = Vec::with_capacity(batches * len * len);
        for seq in ids {
            for i in 0..len {
                mask.extend((0..len).map(|j| j <= i && (j == i || seq[j] != PAD_ID)));
            }
        }
        let self_layout = AttentionLayout {
            batches,
            q_len: len,
            kv_len: len,
            heads: cfg.n_heads,
        };
        let cross_layout = AttentionLayout {
            batches,
            q_len: len,
            kv_len: 1,
            heads: cfg.n_heads,
        };
        for b in 0..cfg.n_decoder_blocks {
            let p = format!("decoder.{b}");
            let a = self.mha(x, x, &format!("{p}.self_attn"), self_layout, Some(mask.clone()))?;
            let a = self.drop(a)?;
            let r = self.tape.add(x, a)?;
            x = self.norm(r, &format!("{p}.norm1"))?;
            let c = self.mha(x, hybrid, &format!("{p}.cross_attn"), cross_layout, None)?;
            let c = self.drop(c)?;
            let r = self.tape.add(x, c)?;
            x = self.norm(r, &format!("{p}.norm2"))?;
            let h = self.linear(x, &format!("{p}.ff1"))?;
            let h = self.tape.relu(h)?;
            let f = self.linear(h, &format!("{p}.ff2"))?;
            let f = self.drop(f)?;
            let r = self.tape.add(x, f)?;
            x = self.norm(r, &format!("{p}.norm3"))?;
        }
        self.linear(x, "classifier")
    }
}

/// Stacks equal-length rows into a `[rows × width]` tensor of `T`.
pub fn stack_rows<T: Scalar>(rows: &[&[f32]], width: usize, what: &'static str) -> Result<Tensor<T>> {
    let mut values = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(TensorError::ShapeMismatch {
                op: what,
                left: vec![r.len()],
                right: vec![width],
            }
            .into());
        }
        values.extend(r.iter().map(|&v| T::of(v as f64)));
    }
    Ok(Tensor::new(vec![rows.len(), width], values)?)
}
