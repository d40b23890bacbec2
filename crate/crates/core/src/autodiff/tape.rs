use crate::error::{invalid, Error, Result};
use crate::par::Execution;
use crate::real::Real;

use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward rule sees.
pub struct BackwardCtx<'a, T> {
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    /// Gradient of the loss with respect to `output`.
    pub grad: &'a [T],
    /// Which inputs need a gradient. Rules may return `None` for the others.
    pub needs: Vec<bool>,
    pub exec: Execution,
}

pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> + Send + Sync>;

struct Node<T> {
    op: &'static str,
    value: Tensor<T>,
    requires_grad: bool,
    inputs: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    grad: Option<Vec<T>>,
}

/// Linear record of a forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    exec: Execution,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::with_execution(Execution::default())
    }

    pub fn with_execution(exec: Execution) -> Self {
        Tape {
            nodes: Vec::new(),
            exec,
        }
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: "leaf",
            value,
            requires_grad,
            inputs: Vec::new(),
            backward: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Records an op output. The backward rule is dropped when no input
    /// needs a gradient.
    pub(crate) fn push<F>(&mut self, op: &'static str, value: Tensor<T>, inputs: &[Var], backward: F) -> Var
    where
        F: Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            inputs: inputs.iter().map(|v| v.0).collect(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// First recorded value containing NaN or ±Inf, as `(index, op name)`.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op))
    }

    /// Back-propagates from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = loss.0;
        if self.nodes[root].value.numel() != 1 {
            return Err(invalid(format!(
                "backward needs a scalar root, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(vec![T::one()]);
        let mut leaf_grads: Vec<(usize, Vec<T>)> = Vec::new();

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(rule) = node.backward.as_ref() else {
                if node.inputs.is_empty() {
                    leaf_grads.push((i, g));
                }
                continue;
            };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|&j| &self.nodes[j].value).collect(),
                output: &node.value,
                grad: &g,
                needs: node.inputs.iter().map(|&j| self.nodes[j].requires_grad).collect(),
                exec: self.exec,
            };
            let input_grads = rule(&ctx);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
            for (k, ig) in input_grads.into_iter().enumerate() {
                let j = node.inputs[k];
                let Some(ig) = ig else { continue };
                if !self.nodes[j].requires_grad {
                    continue;
                }
                if ig.len() != self.nodes[j].value.numel() {
                    return Err(Error::Shape(format!(
                        "backward of {} produced {} grads for input of {} elements",
                        node.op,
                        ig.len(),
                        self.nodes[j].value.numel()
                    )));
                }
                match &mut grads[j] {
                    Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(ig),
                }
            }
        }

        for (i, g) in leaf_grads {
            match &mut self.nodes[i].grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}
