//! Named parameter sets and the Adam optimizer.

use indexmap::IndexMap;

use crate::{Scalar, Tensor, TensorError, TensorResult};

/// Ordered, named collection of learnable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T: Scalar = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for Parameters<T> {
    fn default() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }
}

impl<T: Scalar> Parameters<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> TensorResult<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(TensorError::Contract(format!("duplicate parameter {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }
}

/// Flat gradient buffers keyed by parameter name.
pub type Gradients<T = f32> = IndexMap<String, Vec<T>>;

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut Gradients<T>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.values() {
        for &v in g {
            sq += v.as_f64() * v.as_f64();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        for g in grads.values_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub step: u64,
    pub first: IndexMap<String, Vec<T>>,
    pub second: IndexMap<String, Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped like `params`.
    pub fn for_params(params: &Parameters<T>) -> Self {
        let zeros: IndexMap<String, Vec<T>> = params
            .iter()
            .map(|(k, v)| (k.to_string(), vec![T::zero(); v.numel()]))
            .collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update applied in place.
///
/// Parameters without an entry in `grads` are left untouched but the shared
/// step counter still advances.
pub fn adam_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> TensorResult<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| TensorError::Contract(format!("gradient for unknown parameter {name}")))?;
        let n = p.numel();
        let m_len = state.first.get(name).map(Vec::len);
        let v_len = state.second.get(name).map(Vec::len);
        if g.len() != n || m_len != Some(n) || v_len != Some(n) {
            return Err(TensorError::Contract(format!(
                "{name}: parameter has {n} values, gradient {}, moments {m_len:?}/{v_len:?}",
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::of(config.beta1);
    let b2 = T::of(config.beta2);
    let one = T::one();
    let c1 = T::of(1.0 - config.beta1.powf(t));
    let c2 = T::of(1.0 - config.beta2.powf(t));
    let lr = T::of(config.lr);
    let eps = T::of(config.eps);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("validated above").values_mut();
        let m = state.first.get_mut(name).expect("validated above");
        let v = state.second.get_mut(name).expect("validated above");
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam with its configuration and state bundled together.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar = f32> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &Parameters<T>) -> Self {
        Self {
            config,
            state: AdamState::for_params(params),
        }
    }

    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Gradients<T>) -> TensorResult<()> {
        adam_step(params, grads, &mut self.state, &self.config)
    }
}
