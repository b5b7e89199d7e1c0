//! Append-only operation tape for reverse-mode differentiation.
//!
//! Values live in an arena owned by the tape and are addressed by [`Var`]
//! handles. Appending order is the topological order, so the backward pass
//! is a single reverse sweep that visits each node exactly once. Gradients
//! accumulate additively across fan-out and are only materialized for nodes
//! that participate in differentiation.

use alloc::vec;
use alloc::vec::Vec;

use super::primitive::{eval, vjp, Primitive};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

struct Node {
    value: Tensor,
    requires_grad: bool,
    /// Primitive and operands, kept only when the result participates in
    /// differentiation.
    src: Option<(Primitive, Vec<Var>)>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf that does not participate in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, None)
    }

    /// Record a differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, None)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Drop all recorded nodes so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, src: Option<(Primitive, Vec<Var>)>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            src,
        });
        Var(self.nodes.len() - 1)
    }

    /// Apply a primitive to operands already on the tape.
    ///
    /// The result is recorded for differentiation iff any operand
    /// participates. Non-finite outputs are a hard error.
    pub fn apply(&mut self, p: Primitive, args: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = args.iter().map(|&a| &self.nodes[a.0].value).collect();
        let out = eval(&p, &values)?;
        if !out.is_finite() {
            return Err(Error::NonFinite { primitive: p.name() });
        }
        let requires_grad = args.iter().any(|&a| self.nodes[a.0].requires_grad);
        let src = requires_grad.then(|| (p, args.to_vec()));
        Ok(self.push(out, requires_grad, src))
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Fails on a non-scalar loss and when called a second time without
    /// [`Tape::reset`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::invalid(
                "backward called twice on the same tape without reset",
            ));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::invalid(alloc::format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0],
        )?);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            let put_back = self.nodes[i].src.is_none();
            if let Some((p, args)) = &self.nodes[i].src {
                let arg_values: Vec<&Tensor> =
                    args.iter().map(|&a| &self.nodes[a.0].value).collect();
                let wants: Vec<bool> =
                    args.iter().map(|&a| self.nodes[a.0].requires_grad).collect();
                let partials = vjp(p, &arg_values, &self.nodes[i].value, &grad_out, &wants);
                for (&arg, partial) in args.iter().zip(partials) {
                    let Some(partial) = partial else { continue };
                    match &mut grads[arg.0] {
                        Some(acc) => {
                            for (a, p) in acc.data_mut().iter_mut().zip(partial.data()) {
                                *a += p;
                            }
                        }
                        slot => *slot = Some(partial),
                    }
                }
            }
            if put_back {
                // Leaf gradient: keep it for the caller.
                grads[i] = Some(grad_out);
            }
        }
        Ok(Gradients { grads })
    }
}
