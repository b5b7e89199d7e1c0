//! Minimal reverse-mode differentiable compute core over dense f64 arrays.
//!
//! Just enough machinery to train the small denoiser backbones and the
//! action classifier: a fixed primitive set, a Wengert tape, and Adam.

mod params;
mod primitive;
mod tape;
mod tensor;

pub use params::{
    adam_step, normal_init, xavier_uniform, AdamState, BoundParams, ParamId, ParamSet,
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};
pub use primitive::{eval, vjp, Primitive};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::Result;

impl Tape {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::Scale(c), &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat(axis), parts)
    }
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::Slice { axis, start, len }, &[a])
    }
    pub fn reshape(&mut self, a: Var, shape: alloc::vec::Vec<usize>) -> Result<Var> {
        self.apply(Primitive::Reshape(shape), &[a])
    }
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[a])
    }
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Gelu, &[a])
    }
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Softmax, &[a])
    }
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.apply(Primitive::LayerNorm { eps }, &[a])
    }
    pub fn embedding(&mut self, table: Var, indices: alloc::vec::Vec<usize>) -> Result<Var> {
        self.apply(Primitive::Embedding(indices), &[table])
    }
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::SquaredError, &[a, b])
    }
}
