use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Index of a parameter within a [`ParamSet`]; stable across training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of trainable tensors.
///
/// Insertion order is fixed at model construction, so optimizer state,
/// checkpoints, and gradient maps all align by index.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Place every parameter on a tape, as differentiable leaves when
    /// `trainable`, else as constants (inference).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles for a bound [`ParamSet`], aligned by [`ParamId`].
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Collect per-parameter gradients (zero tensors where no gradient
    /// flowed) from a finished backward pass.
    pub fn gradients(
        &self,
        params: &ParamSet,
        grads: &mut super::tape::Gradients,
    ) -> Vec<Tensor> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(params.tensors[i].shape()))
            })
            .collect()
    }
}

/// Xavier/Glorot uniform initialization for a `[fan_in, fan_out]` matrix.
pub fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(alloc::vec![fan_in, fan_out], data).unwrap()
}

/// Gaussian initialization with the given standard deviation.
pub fn normal_init(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            z * std
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// First/second moment buffers and step counter for [`adam_step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn for_params(params: &ParamSet) -> Self {
        AdamState {
            m: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            step: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One Adam update (β₁=0.9, β₂=0.999, ε=1e-8) with bias correction.
///
/// `grads` must align with `params` by index; shapes are checked.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::invalid(alloc::format!(
            "adam_step arity mismatch: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensors[i].shape() {
            return Err(Error::invalid(alloc::format!(
                "adam_step shape mismatch for `{}`: param {:?} vs grad {:?}",
                params.names[i],
                params.tensors[i].shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(ADAM_BETA1, t);
    let bc2 = 1.0 - libm::pow(ADAM_BETA2, t);
    for i in 0..params.len() {
        let p = params.tensors[i].data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = grads[i].data();
        for j in 0..p.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
        }
    }
    Ok(())
}
