use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ops::{self, ActivationKind};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded primitive and whatever it saved for the backward pass.
pub(crate) enum Op {
    Leaf,
    Conv2d {
        xs: Vec<Var>,
        widths: Vec<usize>,
        k: Var,
        pad_top: usize,
        pad_left: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// Per-channel mean used for normalisation.
        mean: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
        /// Per channel: the batch variance sat below the floor.
        floored: Vec<bool>,
    },
    Activation {
        x: Var,
        kind: ActivationKind,
    },
    Reduce {
        x: Var,
        axes: Vec<usize>,
        mean: bool,
    },
    Cosine {
        a: Var,
        b: Var,
        eps: f64,
    },
    Resample {
        x: Var,
    },
    Matmul {
        a: Var,
        b: Var,
    },
    MixNodes {
        s: Var,
        x: Var,
        start: usize,
        len: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Affine {
        x: Var,
        scale: f64,
    },
    Powf {
        x: Var,
        p: f64,
    },
    Transpose {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    ConcatLast {
        parts: Vec<Var>,
    },
    SliceLast {
        x: Var,
        start: usize,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    AvgPool {
        x: Var,
        window: usize,
        stride: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Append-only record of primitive applications.
///
/// Nodes are stored in creation order, so every node's inputs precede it.
/// [`Tape::backward`] walks that order in reverse, visiting each node once.
///
/// Gradient policy: `backward` may be called more than once; each call
/// recomputes gradients from scratch (no accumulation across calls). Call
/// [`Tape::clear`] to reuse the allocation for the next step.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

/// Lazily allocated gradient buffers, one per node.
pub(crate) struct GradBuffers {
    bufs: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl GradBuffers {
    /// Zero-initialised accumulation buffer for `v`.
    pub(crate) fn slot(&mut self, v: Var) -> &mut [f64] {
        let len = self.lens[v.0];
        self.bufs[v.0].get_or_insert_with(|| vec![0.0; len])
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and gradient.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Records a differentiable leaf; its gradient is available after backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward's loss with respect to `v`.
    ///
    /// `None` when `v` does not require gradients or was not reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an op output, rejecting non-finite values.
    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut buffers = GradBuffers {
            bufs: vec![None; self.nodes.len()],
            lens: self.nodes.iter().map(|n| n.value.len()).collect(),
        };
        buffers.bufs[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(gout) = buffers.bufs[idx].take() else {
                continue;
            };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                buffers.bufs[idx] = Some(gout);
                continue;
            }
            self.backward_node(idx, &gout, &mut buffers);
        }

        self.grads = buffers
            .bufs
            .into_iter()
            .zip(&self.nodes)
            .map(|(buf, node)| match (buf, &node.op) {
                (Some(g), Op::Leaf) if node.requires_grad => {
                    Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape"))
                }
                _ => None,
            })
            .collect();
        Ok(())
    }

    fn backward_node(&self, idx: usize, gout: &[f64], g: &mut GradBuffers) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv2d {
                xs,
                widths,
                k,
                pad_top,
                pad_left,
            } => ops::conv::backward(self, xs, widths, *k, (*pad_top, *pad_left), out, gout, g),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                train,
                floored,
            } => ops::norm::backward(
                self,
                (*x, *gamma, *beta),
                mean,
                inv_std,
                *train,
                floored,
                gout,
                g,
            ),
            Op::Activation { x, kind } => {
                ops::elementwise::activation_backward(self, *x, *kind, out, gout, g)
            }
            Op::Reduce { x, axes, mean } => ops::reduce::backward(self, *x, axes, *mean, gout, g),
            Op::Cosine { a, b, eps } => ops::reduce::cosine_backward(self, *a, *b, *eps, gout, g),
            Op::Resample { x } => ops::shape::resample_backward(self, *x, out, gout, g),
            Op::Matmul { a, b } => ops::linalg::matmul_backward(self, *a, *b, gout, g),
            Op::MixNodes { s, x, start, len } => {
                ops::linalg::mix_nodes_backward(self, *s, *x, (*start, *len), gout, g)
            }
            Op::Add { a, b } => ops::elementwise::add_backward(self, *a, *b, out, gout, g),
            Op::Mul { a, b } => ops::elementwise::mul_backward(self, *a, *b, out, gout, g),
            Op::Affine { x, scale } => {
                if self.requires_grad(*x) {
                    crate::tensor::axpy_slice(g.slot(*x), *scale, gout);
                }
            }
            Op::Powf { x, p } => ops::elementwise::powf_backward(self, *x, *p, gout, g),
            Op::Transpose { x } => ops::shape::transpose_backward(self, *x, gout, g),
            Op::Reshape { x } => {
                if self.requires_grad(*x) {
                    crate::tensor::axpy_slice(g.slot(*x), 1.0, gout);
                }
            }
            Op::ConcatLast { parts } => ops::shape::concat_backward(self, parts, out, gout, g),
            Op::SliceLast { x, start } => {
                ops::shape::slice_backward(self, *x, *start, out, gout, g)
            }
            Op::Dense { x, w, b } => ops::linalg::dense_backward(self, *x, *w, *b, gout, g),
            Op::AvgPool { x, window, stride } => {
                ops::nn::avg_pool_backward(self, *x, *window, *stride, out, gout, g)
            }
            Op::Dropout { x, mask } => {
                if self.requires_grad(*x) {
                    for ((d, m), go) in g.slot(*x).iter_mut().zip(mask).zip(gout) {
                        *d += m * go;
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => ops::nn::softmax_ce_backward(self, *logits, labels, probs, gout, g),
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv2d { .. } => "conv2d",
        Op::BatchNorm { .. } => "batch_norm",
        Op::Activation { .. } => "activation",
        Op::Reduce { .. } => "reduce",
        Op::Cosine { .. } => "cosine_similarity",
        Op::Resample { .. } => "linear_resample",
        Op::Matmul { .. } => "matmul",
        Op::MixNodes { .. } => "mix_nodes",
        Op::Add { .. } => "add",
        Op::Mul { .. } => "mul",
        Op::Affine { .. } => "affine",
        Op::Powf { .. } => "powf",
        Op::Transpose { .. } => "transpose",
        Op::Reshape { .. } => "reshape",
        Op::ConcatLast { .. } => "concat",
        Op::SliceLast { .. } => "slice",
        Op::Dense { .. } => "dense",
        Op::AvgPool { .. } => "avg_pool",
        Op::Dropout { .. } => "dropout",
        Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
    }
}
