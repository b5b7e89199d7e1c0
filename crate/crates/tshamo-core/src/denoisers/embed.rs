//! Sinusoidal embeddings for timesteps and frame positions.

use alloc::vec::Vec;

use crate::diffcore::Tensor;

const BASE: f64 = 10_000.0;

/// Standard sinusoidal encoding of a scalar position at `d_model` dims,
/// interleaved as (sin, cos) pairs: frequency i is BASE^(-2i/d_model).
fn sinusoid(pos: f64, d_model: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(d_model);
    let half = d_model / 2;
    for i in 0..half {
        let freq = libm::pow(BASE, -2.0 * i as f64 / d_model as f64);
        v.push(libm::sin(pos * freq));
        v.push(libm::cos(pos * freq));
    }
    if d_model % 2 == 1 {
        let freq = libm::pow(BASE, -2.0 * half as f64 / d_model as f64);
        v.push(libm::sin(pos * freq));
    }
    v
}

/// Timestep embedding as a `[1, d_model]` row.
pub fn embed_timestep(t: usize, d_model: usize) -> Tensor {
    Tensor::new(alloc::vec![1, d_model], sinusoid(t as f64, d_model)).unwrap()
}

/// Positional encodings for `len` frame tokens, `[len, d_model]`.
pub fn positional_encoding(len: usize, d_model: usize) -> Tensor {
    let mut data = Vec::with_capacity(len * d_model);
    for p in 0..len {
        data.extend_from_slice(&sinusoid(p as f64, d_model));
    }
    Tensor::new(alloc::vec![len, d_model], data).unwrap()
}
