use super::tensor::Tensor;
use super::{attention, conv, elementwise, linalg, norm, shape, AutodiffError};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<F> {
    Leaf,
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        stride: usize,
        pad: usize,
    },
    GroupNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        groups: usize,
        mean: Vec<F>,
        rstd: Vec<F>,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        mean: Vec<F>,
        rstd: Vec<F>,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    Relu {
        x: usize,
    },
    Softmax {
        x: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    AddBroadcast {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: F,
    },
    AddScalar {
        x: usize,
    },
    Abs {
        x: usize,
    },
    Sqrt {
        x: usize,
    },
    Square {
        x: usize,
    },
    SumAll {
        x: usize,
    },
    MeanAll {
        x: usize,
    },
    SumLastDim {
        x: usize,
    },
    Reshape {
        x: usize,
    },
    Permute {
        x: usize,
        axes: Vec<usize>,
    },
    ConcatChannels {
        a: usize,
        b: usize,
    },
    Upsample2x {
        x: usize,
    },
    Gather {
        x: usize,
        pixels: Vec<usize>,
    },
    SelectBatch {
        x: usize,
        index: usize,
    },
    StackBatch {
        xs: Vec<usize>,
    },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
    },
}

pub(crate) struct Node<F> {
    pub(crate) value: Tensor<F>,
    pub(crate) op: Op<F>,
    pub(crate) requires_grad: bool,
    pub(crate) param: Option<usize>,
    pub(crate) grad: Option<Vec<F>>,
}

/// Append-only record of one forward pass.
pub struct Graph<F: Scalar> {
    pub(crate) nodes: Vec<Node<F>>,
    track_kinks: bool,
    kink_signature: u64,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            track_kinks: false,
            kink_signature: 0xcbf2_9ce4_8422_2325,
        }
    }

    /// Graph that fingerprints the sign pattern of every relu/hinge/abs input.
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn with_kink_tracking() -> Self {
        Self {
            track_kinks: true,
            ..Self::new()
        }
    }

    pub fn kink_signature(&self) -> u64 {
        self.kink_signature
    }

    pub(crate) fn note_kinks(&mut self, x: Var) {
        if !self.track_kinks {
            return;
        }
        let mut h = self.kink_signature;
        for v in self.nodes[x.0].value.data() {
            h ^= (*v > F::zero()) as u64 + 1;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.kink_signature = h;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to entry `id` of an external parameter store.
    pub fn param_leaf(&mut self, value: &Tensor<F>, id: usize) -> Var {
        let v = self.leaf(value.clone(), true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients of every parameter leaf, keyed by parameter id.
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &[F])> + '_ {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.as_deref()?)))
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, op: Op<F>, inputs: &[usize]) -> Var {
        debug_assert!(
            !inputs.iter().all(|&i| self.nodes[i].value.all_finite()) || value.all_finite(),
            "forward op produced non-finite values from finite inputs"
        );
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let value = &self.nodes[loss.0].value;
        if !value.is_scalar() {
            return Err(AutodiffError::NotScalar(value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<F>>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![F::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                let node = &mut self.nodes[id];
                match node.grad.as_mut() {
                    Some(acc) => super::kernels::add_into(acc, &g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.backward_node(id, &g, &mut adj);
        }
        Ok(())
    }

    /// Zero-initialized adjoint buffer of input `id`, or `None` when it needs no gradient.
    pub(crate) fn adj_slot<'a>(
        &self,
        adj: &'a mut [Option<Vec<F>>],
        id: usize,
    ) -> Option<&'a mut [F]> {
        if !self.nodes[id].requires_grad {
            return None;
        }
        let n = self.nodes[id].value.numel();
        Some(adj[id].get_or_insert_with(|| vec![F::zero(); n]).as_mut_slice())
    }

    fn backward_node(&self, id: usize, g: &[F], adj: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                conv::backward(self, *x, *w, *b, *stride, *pad, g, adj)
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                rstd,
            } => norm::group_norm_backward(self, *x, *gamma, *beta, *groups, mean, rstd, g, adj),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => norm::layer_norm_backward(self, *x, *gamma, *beta, mean, rstd, g, adj),
            Op::MatMul { a, b } => linalg::matmul_backward(self, *a, *b, g, adj),
            Op::Softmax { x } => linalg::softmax_backward(self, id, *x, g, adj),
            Op::Attention { q, k, v, heads } => {
                attention::backward(self, *q, *k, *v, *heads, g, adj)
            }
            Op::Reshape { x } => shape::reshape_backward(self, *x, g, adj),
            Op::Permute { x, axes } => shape::permute_backward(self, *x, axes, g, adj),
            Op::ConcatChannels { a, b } => shape::concat_backward(self, *a, *b, g, adj),
            Op::Upsample2x { x } => shape::upsample_backward(self, *x, g, adj),
            Op::Gather { x, pixels } => shape::gather_backward(self, *x, pixels, g, adj),
            Op::SelectBatch { x, index } => shape::select_batch_backward(self, *x, *index, g, adj),
            Op::StackBatch { xs } => shape::stack_batch_backward(self, xs, g, adj),
            op => elementwise::backward(self, id, op, g, adj),
        }
    }
}
