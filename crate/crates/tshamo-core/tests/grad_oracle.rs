//! Finite-difference oracle checks for the compute core.
//!
//! The oracle lives entirely in this file and never touches the tape's
//! backward pass: gradients are re-derived by central differences on the
//! forward evaluation alone.

use proptest::prelude::*;
use tshamo_core::diffcore::{Primitive, Tape, Tensor, Var};

const FD_H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

/// A closure that assembles a scalar loss from leaf variables.
type Builder = fn(&mut Tape, &[Var]) -> Var;

fn run_loss(builder: Builder, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = builder(&mut tape, &vars);
    tape.value(loss).item().unwrap()
}

/// Central finite differences of the loss w.r.t. every input element.
fn fd_gradients(builder: Builder, inputs: &[Tensor]) -> Vec<Tensor> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut g = Tensor::zeros(t.shape());
            for j in 0..t.numel() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += FD_H;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= FD_H;
                g.data_mut()[j] = (run_loss(builder, &plus) - run_loss(builder, &minus)) / (2.0 * FD_H);
            }
            g
        })
        .collect()
}

fn analytic_gradients(builder: Builder, inputs: &[Tensor]) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = builder(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

fn assert_grads_match(builder: Builder, inputs: &[Tensor], label: &str) {
    let analytic = analytic_gradients(builder, inputs);
    let numeric = fd_gradients(builder, inputs);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (j, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let denom = av.abs().max(nv.abs()).max(1e-6);
            let rel = (av - nv).abs() / denom;
            assert!(
                rel <= REL_TOL,
                "{label}: input {i} element {j}: analytic {av} vs fd {nv} (rel {rel:.3e})"
            );
        }
    }
}

fn t33(seed: u64) -> Tensor {
    // Smooth deterministic values in a range that keeps every primitive
    // well-conditioned.
    let data = (0..9)
        .map(|i| 0.9 * ((seed as f64 * 0.61803 + i as f64 * 1.113).sin()))
        .collect();
    Tensor::new(vec![3, 3], data).unwrap()
}

// ---- per-primitive composites -------------------------------------------

fn c_matmul_mse(t: &mut Tape, v: &[Var]) -> Var {
    let prod = t.matmul(v[0], v[1]).unwrap();
    let se = t.squared_error(prod, v[2]).unwrap();
    t.mean(se).unwrap()
}

fn c_bias_gelu(t: &mut Tape, v: &[Var]) -> Var {
    let lin = t.matmul(v[0], v[1]).unwrap();
    let biased = t.add(lin, v[3]).unwrap(); // row-vector bias broadcast
    let act = t.gelu(biased).unwrap();
    t.sum(act).unwrap()
}

fn c_softmax_mul(t: &mut Tape, v: &[Var]) -> Var {
    let sm = t.softmax(v[0]).unwrap();
    let prod = t.mul(sm, v[1]).unwrap();
    t.sum(prod).unwrap()
}

fn c_layer_norm(t: &mut Tape, v: &[Var]) -> Var {
    let mixed = t.sub(v[0], v[1]).unwrap();
    let ln = t.layer_norm(mixed, 1e-5).unwrap();
    let prod = t.mul(ln, v[2]).unwrap();
    t.mean(prod).unwrap()
}

fn c_concat_slice(t: &mut Tape, v: &[Var]) -> Var {
    let cat = t.concat(&[v[0], v[1]], 1).unwrap();
    let sl = t.slice(cat, 1, 2, 3).unwrap();
    let sc = t.scale(sl, 1.7).unwrap();
    t.sum(sc).unwrap()
}

fn c_transpose_reshape(t: &mut Tape, v: &[Var]) -> Var {
    let tr = t.transpose(v[0]).unwrap();
    let flat = t.reshape(tr, vec![9]).unwrap();
    let flat_b = t.reshape(v[1], vec![9]).unwrap();
    let se = t.squared_error(flat, flat_b).unwrap();
    t.mean(se).unwrap()
}

fn c_embedding(t: &mut Tape, v: &[Var]) -> Var {
    let rows = t.embedding(v[0], vec![0, 2, 2]).unwrap();
    let prod = t.mul(rows, v[1]).unwrap();
    t.sum(prod).unwrap()
}

fn c_scalar_broadcast(t: &mut Tape, v: &[Var]) -> Var {
    // scalar-tensor broadcasting on add and multiply
    let shifted = t.add(v[0], v[4]).unwrap();
    let scaled = t.mul(shifted, v[4]).unwrap();
    let diff = t.sub(scaled, v[1]).unwrap();
    let se = t.squared_error(diff, v[2]).unwrap();
    t.mean(se).unwrap()
}

const COMPOSITES: &[(&str, Builder)] = &[
    ("matmul+squared_error+mean", c_matmul_mse),
    ("matmul+bias_add+gelu+sum", c_bias_gelu),
    ("softmax+mul+sum", c_softmax_mul),
    ("sub+layer_norm+mul+mean", c_layer_norm),
    ("concat+slice+scale+sum", c_concat_slice),
    ("transpose+reshape+squared_error", c_transpose_reshape),
    ("embedding+mul+sum", c_embedding),
    ("scalar_broadcast_chain", c_scalar_broadcast),
];

fn inputs_for(seed: u64) -> Vec<Tensor> {
    let bias = Tensor::new(
        vec![3],
        (0..3).map(|i| 0.3 * ((seed + 7) as f64 + i as f64).cos()).collect(),
    )
    .unwrap();
    let scalar = Tensor::scalar(0.7 + 0.1 * (seed as f64).sin());
    vec![t33(seed), t33(seed + 1), t33(seed + 2), bias, scalar]
}

#[test]
fn every_primitive_matches_finite_differences() {
    for (label, builder) in COMPOSITES {
        assert_grads_match(*builder, &inputs_for(11), label);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_composites_match_finite_differences(seed in 0u64..1000, idx in 0usize..COMPOSITES.len()) {
        let (label, builder) = COMPOSITES[idx];
        assert_grads_match(builder, &inputs_for(seed), label);
    }
}

// ---- frozen oracle values -------------------------------------------------

/// Independent erf via its Maclaurin series (converges fast for |z| < 3).
fn erf_series(z: f64) -> f64 {
    let mut term = z;
    let mut sum = z;
    for n in 1..60 {
        term *= -z * z / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    sum * 2.0 / core::f64::consts::PI.sqrt()
}

#[test]
fn gelu_matches_high_precision_normal_cdf() {
    // Oracle: x * Phi(x) with Phi from the series erf.
    let phi = |x: f64| 0.5 * (1.0 + erf_series(x / 2.0_f64.sqrt()));
    let mut tape = Tape::new();
    for &x in &[-2.0, -0.5, 0.0, 0.3, 1.0, 2.5] {
        let v = tape.constant(Tensor::scalar(x));
        let g = tape.apply(Primitive::Gelu, &[v]).unwrap();
        let got = tape.value(g).item().unwrap();
        let want = x * phi(x);
        assert!((got - want).abs() < 1e-12, "gelu({x}) = {got}, oracle {want}");
    }
    // The spot value from the exact-erf formulation.
    assert!((1.0 * phi(1.0) - 0.8413).abs() < 1e-4);
}

#[test]
fn backward_is_linear_in_the_loss() {
    // grad(a*f + b*g) == a*grad(f) + b*grad(g) on shared inputs.
    let (a, b) = (1.7, -0.4);
    let x = t33(3);
    let y = t33(4);

    let grad_f = analytic_gradients(c_softmax_mul, &[x.clone(), y.clone()]);
    let grad_g = analytic_gradients(c_transpose_reshape, &[x.clone(), y.clone()]);

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let yv = tape.param(y.clone());
    let f = c_softmax_mul(&mut tape, &[xv, yv]);
    let g = c_transpose_reshape(&mut tape, &[xv, yv]);
    let fa = tape.scale(f, a).unwrap();
    let gb = tape.scale(g, b).unwrap();
    let total = tape.add(fa, gb).unwrap();
    let grads = tape.backward(total).unwrap();

    for (i, v) in [xv, yv].into_iter().enumerate() {
        let combo = grads.get(v).unwrap();
        for (j, &got) in combo.data().iter().enumerate() {
            let want = a * grad_f[i].data()[j] + b * grad_g[i].data()[j];
            assert!((got - want).abs() < 1e-12, "element {j}: {got} vs {want}");
        }
    }
}

#[test]
fn outputs_and_gradients_are_bit_deterministic() {
    let inputs = inputs_for(99);
    let a = analytic_gradients(c_bias_gelu, &inputs);
    let b = analytic_gradients(c_bias_gelu, &inputs);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.data(), y.data());
    }
    assert_eq!(run_loss(c_bias_gelu, &inputs).to_bits(), run_loss(c_bias_gelu, &inputs).to_bits());
}
