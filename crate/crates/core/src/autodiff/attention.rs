//! Fused multi-head scaled dot-product attention.
//!
//! The backward pass recomputes each attention row instead of storing the
//! `heads x M x M` probability tensor, so memory stays linear in the token
//! count. That is what makes 4096-token bottlenecks trainable on a laptop.

use super::graph::{Graph, Op, Var};
use super::kernels::{axpy, dot};
use super::linalg::softmax_in_place;
use super::tensor::Tensor;
use super::{shape_err, AutodiffError};
use crate::scalar::Scalar;

/// One head's operands, transposed so the token axis is contiguous.
struct Head<F> {
    q: Vec<F>,  // [M, dh]
    kt: Vec<F>, // [dh, M]
    vt: Vec<F>, // [dh, M]
}

fn split_head<F: Scalar>(q: &[F], k: &[F], v: &[F], m: usize, d: usize, dh: usize, h: usize) -> Head<F> {
    let mut head = Head {
        q: vec![F::zero(); m * dh],
        kt: vec![F::zero(); dh * m],
        vt: vec![F::zero(); dh * m],
    };
    for j in 0..m {
        for c in 0..dh {
            let src = j * d + h * dh + c;
            head.q[j * dh + c] = q[src];
            head.kt[c * m + j] = k[src];
            head.vt[c * m + j] = v[src];
        }
    }
    head
}

/// Attention probabilities of query row `i` into `row`.
fn attention_row<F: Scalar>(head: &Head<F>, i: usize, m: usize, dh: usize, scale: F, row: &mut [F]) {
    row.iter_mut().for_each(|v| *v = F::zero());
    for c in 0..dh {
        axpy(head.q[i * dh + c] * scale, &head.kt[c * m..(c + 1) * m], row);
    }
    softmax_in_place(row);
}

fn check(q: &[usize], k: &[usize], v: &[usize], heads: usize) -> Result<(usize, usize), AutodiffError> {
    if q.len() != 2 || q != k || q != v {
        return Err(shape_err(
            "attention",
            format!("q, k, v must share shape [M, D], got {q:?}, {k:?}, {v:?}"),
        ));
    }
    if heads == 0 || q[1] % heads != 0 {
        return Err(AutodiffError::InvalidArgument(format!(
            "attention: dimension {} not divisible by {heads} heads",
            q[1]
        )));
    }
    Ok((q[0], q[1]))
}

impl<F: Scalar> Graph<F> {
    /// Multi-head attention over token matrices `[M, D]`, heads concatenated in the output.
    ///
    /// Head `h` uses feature columns `h*D/heads .. (h+1)*D/heads` and the scale `1/sqrt(D/heads)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var, AutodiffError> {
        let (m, d) = check(self.shape(q), self.shape(k), self.shape(v), heads)?;
        let dh = d / heads;
        let scale = F::one() / F::lit(dh as f64).sqrt();
        let (qs, ks, vs) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![F::zero(); m * d];
        let mut row = vec![F::zero(); m];
        for h in 0..heads {
            let head = split_head(qs, ks, vs, m, d, dh, h);
            for i in 0..m {
                attention_row(&head, i, m, dh, scale, &mut row);
                for c in 0..dh {
                    out[i * d + h * dh + c] = dot(&row, &head.vt[c * m..(c + 1) * m]);
                }
            }
        }
        let out = Tensor::new(vec![m, d], out)?;
        Ok(self.push(
            out,
            Op::Attention {
                q: q.0,
                k: k.0,
                v: v.0,
                heads,
            },
            &[q.0, k.0, v.0],
        ))
    }
}

/// Per-head `[M, M]` attention weight matrices for inspection.
pub fn attention_probabilities<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    heads: usize,
) -> Result<Vec<Tensor<F>>, AutodiffError> {
    let (m, d) = check(q.shape(), k.shape(), k.shape(), heads)?;
    let dh = d / heads;
    let scale = F::one() / F::lit(dh as f64).sqrt();
    (0..heads)
        .map(|h| {
            let head = split_head(q.data(), k.data(), k.data(), m, d, dh, h);
            let mut probs = vec![F::zero(); m * m];
            for (i, row) in probs.chunks_mut(m).enumerate() {
                attention_row(&head, i, m, dh, scale, row);
            }
            Tensor::new(vec![m, m], probs)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<F: Scalar>(
    g: &Graph<F>,
    q: usize,
    k: usize,
    v: usize,
    heads: usize,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let (qs, ks, vs) = (g.nodes[q].value.data(), g.nodes[k].value.data(), g.nodes[v].value.data());
    let shape = g.nodes[q].value.shape();
    let (m, d) = (shape[0], shape[1]);
    let dh = d / heads;
    let scale = F::one() / F::lit(dh as f64).sqrt();

    let mut dq = vec![F::zero(); m * d];
    let mut dk = vec![F::zero(); m * d];
    let mut dv = vec![F::zero(); m * d];
    let mut p = vec![F::zero(); m];
    let mut dp = vec![F::zero(); m];
    for h in 0..heads {
        let head = split_head(qs, ks, vs, m, d, dh, h);
        let mut dkt = vec![F::zero(); dh * m];
        let mut dvt = vec![F::zero(); dh * m];
        for i in 0..m {
            attention_row(&head, i, m, dh, scale, &mut p);
            let go = &grad[i * d + h * dh..i * d + (h + 1) * dh];
            dp.iter_mut().for_each(|x| *x = F::zero());
            for c in 0..dh {
                axpy(go[c], &head.vt[c * m..(c + 1) * m], &mut dp);
                axpy(go[c], &p, &mut dvt[c * m..(c + 1) * m]);
            }
            let sp = dot(&p, &dp);
            // dp becomes the score gradient, already scaled
            for (dpj, &pj) in dp.iter_mut().zip(&p) {
                *dpj = pj * (*dpj - sp) * scale;
            }
            for c in 0..dh {
                dq[i * d + h * dh + c] += dot(&dp, &head.kt[c * m..(c + 1) * m]);
                axpy(head.q[i * dh + c], &dp, &mut dkt[c * m..(c + 1) * m]);
            }
        }
        for j in 0..m {
            for c in 0..dh {
                dk[j * d + h * dh + c] += dkt[c * m + j];
                dv[j * d + h * dh + c] += dvt[c * m + j];
            }
        }
    }
    for (id, buf) in [(q, dq), (k, dk), (v, dv)] {
        if let Some(slot) = g.adj_slot(adj, id) {
            super::kernels::add_into(slot, &buf);
        }
    }
}
