use super::graph::{Graph, Op, Var};
use super::kernels::{axpy, dot};
use super::tensor::Tensor;
use super::{shape_err, AutodiffError};
use crate::scalar::Scalar;

struct MatDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    shared_b: bool,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(MatDims, Vec<usize>), AutodiffError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(shape_err("matmul", format!("operands must have rank >= 2, got {a:?} and {b:?}")));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != kb {
        return Err(shape_err("matmul", format!("inner extents differ: {a:?} x {b:?}")));
    }
    let batch_a = &a[..a.len() - 2];
    let batch_b = &b[..b.len() - 2];
    let shared_b = batch_b.is_empty();
    if !shared_b && batch_a != batch_b {
        return Err(shape_err("matmul", format!("batch extents differ: {a:?} x {b:?}")));
    }
    let mut out = batch_a.to_vec();
    out.extend([m, n]);
    Ok((
        MatDims {
            batch: batch_a.iter().product(),
            m,
            k,
            n,
            shared_b,
        },
        out,
    ))
}

impl<F: Scalar> Graph<F> {
    /// Batched matrix product `[..,M,K] x [..,K,N]`; a rank-2 right operand is shared by every batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (d, out_shape) = matmul_dims(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![F::zero(); d.batch * d.m * d.n];
        for bi in 0..d.batch {
            let am = &av[bi * d.m * d.k..][..d.m * d.k];
            let bm = if d.shared_b { bv } else { &bv[bi * d.k * d.n..][..d.k * d.n] };
            let om = &mut out[bi * d.m * d.n..][..d.m * d.n];
            for i in 0..d.m {
                let orow = &mut om[i * d.n..(i + 1) * d.n];
                for kk in 0..d.k {
                    axpy(am[i * d.k + kk], &bm[kk * d.n..(kk + 1) * d.n], orow);
                }
            }
        }
        let out = Tensor::new(out_shape, out)?;
        Ok(self.push(out, Op::MatMul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// `x W + bias` over the last axis of `x`, with `W: [Din, Dout]`, `bias: [Dout]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, AutodiffError> {
        let y = self.matmul(x, weight)?;
        self.add_broadcast(y, bias)
    }

    /// Softmax along the last axis.
    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        let d = *v
            .shape()
            .last()
            .ok_or_else(|| shape_err("softmax", "rank-0 input"))?;
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(d) {
            softmax_in_place(row);
        }
        let out = Tensor::new(v.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Softmax { x: x.0 }, &[x.0]))
    }
}

pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = F::one() / total;
    row.iter_mut().for_each(|v| *v *= inv);
}

pub(super) fn matmul_backward<F: Scalar>(
    g: &Graph<F>,
    a: usize,
    b: usize,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let (av, bv) = (&g.nodes[a].value, &g.nodes[b].value);
    let (d, _) = matmul_dims(av.shape(), bv.shape()).expect("validated in forward");
    let (ad, bd) = (av.data(), bv.data());
    if let Some(da) = g.adj_slot(adj, a) {
        for bi in 0..d.batch {
            let bm = if d.shared_b { bd } else { &bd[bi * d.k * d.n..][..d.k * d.n] };
            for i in 0..d.m {
                let grow = &grad[(bi * d.m + i) * d.n..][..d.n];
                for kk in 0..d.k {
                    da[(bi * d.m + i) * d.k + kk] += dot(grow, &bm[kk * d.n..(kk + 1) * d.n]);
                }
            }
        }
    }
    if let Some(db) = g.adj_slot(adj, b) {
        for bi in 0..d.batch {
            let off = if d.shared_b { 0 } else { bi * d.k * d.n };
            for i in 0..d.m {
                let grow = &grad[(bi * d.m + i) * d.n..][..d.n];
                for kk in 0..d.k {
                    let coef = ad[(bi * d.m + i) * d.k + kk];
                    axpy(coef, grow, &mut db[off + kk * d.n..off + (kk + 1) * d.n]);
                }
            }
        }
    }
}

pub(super) fn softmax_backward<F: Scalar>(
    g: &Graph<F>,
    id: usize,
    x: usize,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let y = &g.nodes[id].value;
    let d = *y.shape().last().expect("validated in forward");
    if let Some(dx) = g.adj_slot(adj, x) {
        for ((drow, yrow), grow) in dx.chunks_mut(d).zip(y.data().chunks(d)).zip(grad.chunks(d)) {
            let s = dot(yrow, grow);
            for ((dv, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                *dv += yv * (gv - s);
            }
        }
    }
}
