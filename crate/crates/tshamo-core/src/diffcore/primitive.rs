use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul, transpose, Tensor};
use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// The primitive set of the compute core.
///
/// Shapes follow row-major convention; `Softmax` and `LayerNorm` act on the
/// trailing dimension. `Add`, `Sub` and `Mul` accept equal shapes, a scalar
/// on either side, or a trailing row-vector on the right (bias case) — no
/// other broadcasting.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sum,
    Mean,
    Concat(usize),
    Slice { axis: usize, start: usize, len: usize },
    Reshape(Vec<usize>),
    Transpose,
    Gelu,
    Softmax,
    LayerNorm { eps: f64 },
    Embedding(Vec<usize>),
    SquaredError,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "subtract",
            Primitive::Mul => "multiply",
            Primitive::Scale(_) => "scale",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::Concat(_) => "concat",
            Primitive::Slice { .. } => "slice",
            Primitive::Reshape(_) => "reshape",
            Primitive::Transpose => "transpose",
            Primitive::Gelu => "gelu",
            Primitive::Softmax => "softmax",
            Primitive::LayerNorm { .. } => "layer-norm",
            Primitive::Embedding(_) => "embedding-lookup",
            Primitive::SquaredError => "squared-error",
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Primitive::MatMul | Primitive::Add | Primitive::Sub | Primitive::Mul
            | Primitive::SquaredError => n == 2,
            Primitive::Concat(_) => n >= 1,
            _ => n == 1,
        }
    }
}

/// How a binary elementwise op lines its operands up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    RhsScalar,
    LhsScalar,
    /// rhs is a vector matching the trailing dimension of lhs.
    RhsRow,
}

fn classify_broadcast(p: &Primitive, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    if b.numel() == 1 {
        return Ok(Broadcast::RhsScalar);
    }
    if a.numel() == 1 {
        return Ok(Broadcast::LhsScalar);
    }
    if b.rank() == 1 && a.rank() >= 1 && a.shape().last() == Some(&b.numel()) {
        return Ok(Broadcast::RhsRow);
    }
    Err(Error::shape(
        p.name(),
        format!("operands {:?} and {:?}", a.shape(), b.shape()),
    ))
}

fn binary_eval(p: &Primitive, a: &Tensor, b: &Tensor, op: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let bc = classify_broadcast(p, a, b)?;
    let out = match bc {
        Broadcast::Same => {
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| op(x, y))
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        }
        Broadcast::RhsScalar => {
            let y = b.data()[0];
            a.map(|x| op(x, y))
        }
        Broadcast::LhsScalar => {
            let x = a.data()[0];
            let data = b.data().iter().map(|&y| op(x, y)).collect();
            Tensor::new(b.shape().to_vec(), data)?
        }
        Broadcast::RhsRow => {
            let c = b.numel();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| op(x, b.data()[i % c]))
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        }
    };
    Ok(out)
}

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let phi_cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let phi_pdf = INV_SQRT_2PI * libm::exp(-0.5 * x * x);
    phi_cdf + x * phi_pdf
}

/// Sizes used when walking an axis of an n-d tensor as `[outer, axis, inner]`.
fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Evaluate a primitive on concrete operand values.
pub fn eval(p: &Primitive, args: &[&Tensor]) -> Result<Tensor> {
    if !p.arity_ok(args.len()) {
        return Err(Error::invalid(format!(
            "`{}` got {} operand(s)",
            p.name(),
            args.len()
        )));
    }
    match p {
        Primitive::MatMul => {
            let (a, b) = (args[0], args[1]);
            if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
                return Err(Error::shape(
                    p.name(),
                    format!("operands {:?} and {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            Tensor::new(vec![m, n], matmul(a.data(), b.data(), m, k, n))
        }
        Primitive::Add => binary_eval(p, args[0], args[1], |x, y| x + y),
        Primitive::Sub => binary_eval(p, args[0], args[1], |x, y| x - y),
        Primitive::Mul => binary_eval(p, args[0], args[1], |x, y| x * y),
        Primitive::Scale(c) => Ok(args[0].map(|x| c * x)),
        Primitive::Sum => Ok(Tensor::scalar(args[0].data().iter().sum())),
        Primitive::Mean => {
            let n = args[0].numel() as f64;
            Ok(Tensor::scalar(args[0].data().iter().sum::<f64>() / n))
        }
        Primitive::Concat(axis) => {
            let first = args[0];
            let axis = *axis;
            if axis >= first.rank() {
                return Err(Error::shape(
                    p.name(),
                    format!("axis {axis} out of range for rank {}", first.rank()),
                ));
            }
            let mut axis_total = 0;
            for t in args {
                if t.rank() != first.rank() {
                    return Err(Error::shape(
                        p.name(),
                        format!("mixed ranks {:?} vs {:?}", first.shape(), t.shape()),
                    ));
                }
                for (d, (&s, &f)) in t.shape().iter().zip(first.shape()).enumerate() {
                    if d != axis && s != f {
                        return Err(Error::shape(
                            p.name(),
                            format!("operands {:?} and {:?} differ off-axis", first.shape(), t.shape()),
                        ));
                    }
                }
                axis_total += t.shape()[axis];
            }
            let mut out_shape = first.shape().to_vec();
            out_shape[axis] = axis_total;
            let (outer, _, inner) = axis_blocks(&out_shape, axis);
            let mut data = vec![0.0; out_shape.iter().product()];
            let out_stride = axis_total * inner;
            for o in 0..outer {
                let mut written = 0;
                for t in args {
                    let a_len = t.shape()[axis];
                    let src = &t.data()[o * a_len * inner..(o + 1) * a_len * inner];
                    let dst_start = o * out_stride + written * inner;
                    data[dst_start..dst_start + a_len * inner].copy_from_slice(src);
                    written += a_len;
                }
            }
            Tensor::new(out_shape, data)
        }
        Primitive::Slice { axis, start, len } => {
            let t = args[0];
            if *axis >= t.rank() || start + len > t.shape()[*axis] || *len == 0 {
                return Err(Error::shape(
                    p.name(),
                    format!(
                        "range {start}..{} on axis {axis} of {:?}",
                        start + len,
                        t.shape()
                    ),
                ));
            }
            let (outer, a_len, inner) = axis_blocks(t.shape(), *axis);
            let mut out_shape = t.shape().to_vec();
            out_shape[*axis] = *len;
            let mut data = vec![0.0; outer * len * inner];
            for o in 0..outer {
                let src = o * a_len * inner + start * inner;
                let dst = o * len * inner;
                data[dst..dst + len * inner].copy_from_slice(&t.data()[src..src + len * inner]);
            }
            Tensor::new(out_shape, data)
        }
        Primitive::Reshape(shape) => args[0].clone().reshaped(shape.clone()),
        Primitive::Transpose => {
            let t = args[0];
            if t.rank() != 2 {
                return Err(Error::shape(
                    p.name(),
                    format!("expected 2-d operand, got {:?}", t.shape()),
                ));
            }
            Tensor::new(
                vec![t.cols(), t.rows()],
                transpose(t.data(), t.rows(), t.cols()),
            )
        }
        Primitive::Gelu => Ok(args[0].map(gelu_scalar)),
        Primitive::Softmax => {
            let t = args[0];
            if t.rank() == 0 {
                return Err(Error::shape(p.name(), "scalar operand"));
            }
            let cols = *t.shape().last().unwrap();
            let mut data = t.data().to_vec();
            for row in data.chunks_mut(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = libm::exp(*v - max);
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            Tensor::new(t.shape().to_vec(), data)
        }
        Primitive::LayerNorm { eps } => {
            let t = args[0];
            if t.rank() == 0 {
                return Err(Error::shape(p.name(), "scalar operand"));
            }
            let cols = *t.shape().last().unwrap();
            let mut data = t.data().to_vec();
            for row in data.chunks_mut(cols) {
                let mean = row.iter().sum::<f64>() / cols as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                let inv = 1.0 / libm::sqrt(var + eps);
                for v in row.iter_mut() {
                    *v = (*v - mean) * inv;
                }
            }
            Tensor::new(t.shape().to_vec(), data)
        }
        Primitive::Embedding(indices) => {
            let table = args[0];
            if table.rank() != 2 {
                return Err(Error::shape(
                    p.name(),
                    format!("table must be 2-d, got {:?}", table.shape()),
                ));
            }
            let (v, d) = (table.rows(), table.cols());
            let mut data = Vec::with_capacity(indices.len() * d);
            for &i in indices {
                if i >= v {
                    return Err(Error::invalid(format!(
                        "embedding index {i} out of range for table with {v} rows"
                    )));
                }
                data.extend_from_slice(table.row(i));
            }
            Tensor::new(vec![indices.len(), d], data)
        }
        Primitive::SquaredError => {
            let (a, b) = (args[0], args[1]);
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    p.name(),
                    format!("operands {:?} and {:?}", a.shape(), b.shape()),
                ));
            }
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| (x - y) * (x - y))
                .collect();
            Tensor::new(a.shape().to_vec(), data)
        }
    }
}

/// Sum `grad` (shaped like the full output) down to a broadcast operand.
fn reduce_for_broadcast(grad: &[f64], target: &Tensor, bc: Broadcast, lhs_side: bool) -> Tensor {
    match (bc, lhs_side) {
        (Broadcast::Same, _) | (Broadcast::RhsScalar, true) | (Broadcast::LhsScalar, false)
        | (Broadcast::RhsRow, true) => {
            Tensor::new(target.shape().to_vec(), grad.to_vec()).unwrap()
        }
        (Broadcast::RhsScalar, false) | (Broadcast::LhsScalar, true) => {
            Tensor::new(target.shape().to_vec(), vec![grad.iter().sum()]).unwrap()
        }
        (Broadcast::RhsRow, false) => {
            let c = target.numel();
            let mut acc = vec![0.0; c];
            for (i, &g) in grad.iter().enumerate() {
                acc[i % c] += g;
            }
            Tensor::new(target.shape().to_vec(), acc).unwrap()
        }
    }
}

/// Expand either operand of a broadcast binary op to full-output indexing.
fn bc_value(t: &Tensor, bc: Broadcast, lhs_side: bool, i: usize) -> f64 {
    match (bc, lhs_side) {
        (Broadcast::Same, _) | (Broadcast::RhsScalar, true) | (Broadcast::LhsScalar, false)
        | (Broadcast::RhsRow, true) => t.data()[i],
        (Broadcast::RhsScalar, false) | (Broadcast::LhsScalar, true) => t.data()[0],
        (Broadcast::RhsRow, false) => t.data()[i % t.numel()],
    }
}

/// Vector-Jacobian products of a primitive.
///
/// `wants[i]` marks operands that participate in differentiation; gradients
/// for the rest are neither computed nor materialized.
pub fn vjp(
    p: &Primitive,
    args: &[&Tensor],
    out: &Tensor,
    grad: &Tensor,
    wants: &[bool],
) -> Vec<Option<Tensor>> {
    let g = grad.data();
    match p {
        Primitive::MatMul => {
            let (a, b) = (args[0], args[1]);
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let da = wants[0].then(|| {
                let bt = transpose(b.data(), k, n);
                Tensor::new(vec![m, k], matmul(g, &bt, m, n, k)).unwrap()
            });
            let db = wants[1].then(|| {
                let at = transpose(a.data(), m, k);
                Tensor::new(vec![k, n], matmul(&at, g, k, m, n)).unwrap()
            });
            vec![da, db]
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            let (a, b) = (args[0], args[1]);
            let bc = classify_broadcast(p, a, b).expect("checked at eval");
            let full = |side_lhs: bool| -> Vec<f64> {
                match p {
                    Primitive::Add => g.to_vec(),
                    Primitive::Sub => {
                        if side_lhs {
                            g.to_vec()
                        } else {
                            g.iter().map(|v| -v).collect()
                        }
                    }
                    Primitive::Mul => {
                        let other = if side_lhs { b } else { a };
                        g.iter()
                            .enumerate()
                            .map(|(i, &gv)| gv * bc_value(other, bc, !side_lhs, i))
                            .collect()
                    }
                    _ => unreachable!(),
                }
            };
            let da = wants[0].then(|| reduce_for_broadcast(&full(true), a, bc, true));
            let db = wants[1].then(|| reduce_for_broadcast(&full(false), b, bc, false));
            vec![da, db]
        }
        Primitive::Scale(c) => {
            vec![wants[0].then(|| grad.map(|v| c * v))]
        }
        Primitive::Sum => {
            vec![wants[0].then(|| Tensor::filled(args[0].shape(), g[0]))]
        }
        Primitive::Mean => {
            let n = args[0].numel() as f64;
            vec![wants[0].then(|| Tensor::filled(args[0].shape(), g[0] / n))]
        }
        Primitive::Concat(axis) => {
            let (outer, total, inner) = axis_blocks(out.shape(), *axis);
            let mut pos = 0;
            args.iter()
                .zip(wants)
                .map(|(t, &w)| {
                    let a_len = t.shape()[*axis];
                    let start = pos;
                    pos += a_len;
                    w.then(|| {
                        let mut data = vec![0.0; t.numel()];
                        for o in 0..outer {
                            let src = o * total * inner + start * inner;
                            let dst = o * a_len * inner;
                            data[dst..dst + a_len * inner]
                                .copy_from_slice(&g[src..src + a_len * inner]);
                        }
                        Tensor::new(t.shape().to_vec(), data).unwrap()
                    })
                })
                .collect()
        }
        Primitive::Slice { axis, start, len } => {
            vec![wants[0].then(|| {
                let t = args[0];
                let (outer, a_len, inner) = axis_blocks(t.shape(), *axis);
                let mut data = vec![0.0; t.numel()];
                for o in 0..outer {
                    let dst = o * a_len * inner + start * inner;
                    let src = o * len * inner;
                    data[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                Tensor::new(t.shape().to_vec(), data).unwrap()
            })]
        }
        Primitive::Reshape(_) => {
            vec![wants[0]
                .then(|| Tensor::new(args[0].shape().to_vec(), g.to_vec()).unwrap())]
        }
        Primitive::Transpose => {
            let t = args[0];
            vec![wants[0].then(|| {
                Tensor::new(
                    t.shape().to_vec(),
                    transpose(g, t.cols(), t.rows()),
                )
                .unwrap()
            })]
        }
        Primitive::Gelu => {
            vec![wants[0].then(|| {
                let data = args[0]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| gv * gelu_grad_scalar(x))
                    .collect();
                Tensor::new(args[0].shape().to_vec(), data).unwrap()
            })]
        }
        Primitive::Softmax => {
            vec![wants[0].then(|| {
                let cols = *out.shape().last().unwrap();
                let mut data = vec![0.0; out.numel()];
                for (r, (y_row, g_row)) in out.data().chunks(cols).zip(g.chunks(cols)).enumerate() {
                    let dot: f64 = y_row.iter().zip(g_row).map(|(&y, &gv)| y * gv).sum();
                    for c in 0..cols {
                        data[r * cols + c] = y_row[c] * (g_row[c] - dot);
                    }
                }
                Tensor::new(out.shape().to_vec(), data).unwrap()
            })]
        }
        Primitive::LayerNorm { eps } => {
            vec![wants[0].then(|| {
                let x = args[0];
                let cols = *x.shape().last().unwrap();
                let nf = cols as f64;
                let mut data = vec![0.0; x.numel()];
                for (r, (x_row, g_row)) in x.data().chunks(cols).zip(g.chunks(cols)).enumerate() {
                    let mean = x_row.iter().sum::<f64>() / nf;
                    let var = x_row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
                    let inv = 1.0 / libm::sqrt(var + eps);
                    let xhat: Vec<f64> = x_row.iter().map(|v| (v - mean) * inv).collect();
                    let g_mean = g_row.iter().sum::<f64>() / nf;
                    let gx_mean = g_row.iter().zip(&xhat).map(|(&gv, &xh)| gv * xh).sum::<f64>() / nf;
                    for c in 0..cols {
                        data[r * cols + c] = inv * (g_row[c] - g_mean - xhat[c] * gx_mean);
                    }
                }
                Tensor::new(x.shape().to_vec(), data).unwrap()
            })]
        }
        Primitive::Embedding(indices) => {
            vec![wants[0].then(|| {
                let table = args[0];
                let d = table.cols();
                let mut data = vec![0.0; table.numel()];
                for (row, &idx) in indices.iter().enumerate() {
                    for c in 0..d {
                        data[idx * d + c] += g[row * d + c];
                    }
                }
                Tensor::new(table.shape().to_vec(), data).unwrap()
            })]
        }
        Primitive::SquaredError => {
            let (a, b) = (args[0], args[1]);
            let diff2g = || -> Vec<f64> {
                a.data()
                    .iter()
                    .zip(b.data())
                    .zip(g)
                    .map(|((&x, &y), &gv)| 2.0 * (x - y) * gv)
                    .collect()
            };
            let da = wants[0].then(|| Tensor::new(a.shape().to_vec(), diff2g()).unwrap());
            let db = wants[1].then(|| {
                let data = diff2g().iter().map(|v| -v).collect();
                Tensor::new(b.shape().to_vec(), data).unwrap()
            });
            vec![da, db]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t1(data: &[f64]) -> Tensor {
        Tensor::from_vec(data.to_vec())
    }

    #[test]
    fn softmax_symmetry() {
        let out = eval(&Primitive::Softmax, &[&t1(&[0.0, 0.0, 0.0])]).unwrap();
        for &v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = eval(&Primitive::MatMul, &[&a, &b]).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("matmul"), "{msg}");
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = Tensor::from_rows(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_rows(2, 1, vec![5.0, 6.0]).unwrap();
        let cat = eval(&Primitive::Concat(1), &[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 3]);
        assert_eq!(cat.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let back = eval(
            &Primitive::Slice { axis: 1, start: 0, len: 2 },
            &[&cat],
        )
        .unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let table = Tensor::from_rows(3, 2, vec![0.0; 6]).unwrap();
        assert!(eval(&Primitive::Embedding(vec![3]), &[&table]).is_err());
        assert!(eval(&Primitive::Embedding(vec![2]), &[&table]).is_ok());
    }

    #[test]
    fn bias_broadcast_add() {
        let a = Tensor::from_rows(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = t1(&[10.0, 20.0, 30.0]);
        let out = eval(&Primitive::Add, &[&a, &b]).unwrap();
        assert_eq!(out.data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    }
}
