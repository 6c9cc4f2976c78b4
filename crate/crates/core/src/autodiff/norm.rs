use super::graph::{Graph, Op, Var};
use super::tensor::Tensor;
use super::{shape_err, AutodiffError};
use crate::scalar::Scalar;

/// Mean and reciprocal standard deviation of each contiguous block of `n` values.
fn block_stats<F: Scalar>(xs: &[F], n: usize, eps: F) -> (Vec<F>, Vec<F>) {
    let inv_n = F::one() / F::lit(n as f64);
    xs.chunks(n)
        .map(|blk| {
            let mean = super::kernels::sum(blk) * inv_n;
            let var = blk.iter().fold(F::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_n;
            (mean, F::one() / (var + eps).sqrt())
        })
        .unzip()
}

/// `dx` for one standardized block given `dxhat = dy * gamma`.
fn block_input_grad<F: Scalar>(xhat: &[F], dxhat: &[F], rstd: F, dx: &mut [F]) {
    let n = F::lit(xhat.len() as f64);
    let s1 = super::kernels::sum(dxhat);
    let s2 = super::kernels::dot(dxhat, xhat);
    for ((d, &dh), &xh) in dx.iter_mut().zip(dxhat).zip(xhat) {
        *d += rstd * (dh - s1 / n - xh * s2 / n);
    }
}

impl<F: Scalar> Graph<F> {
    /// Group normalization over `[B,C,...]` with per-channel affine `gamma`, `beta`.
    pub fn group_norm(
        &mut self,
        x: Var,
        groups: usize,
        gamma: Var,
        beta: Var,
        eps: F,
    ) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(shape_err("group_norm", format!("expected [B,C,...], got {shape:?}")));
        }
        let c = shape[1];
        if groups == 0 || c % groups != 0 {
            return Err(AutodiffError::InvalidArgument(format!(
                "group_norm: {c} channels not divisible into {groups} groups"
            )));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err("group_norm", format!("affine parameters must have shape [{c}]")));
        }
        if eps <= F::zero() {
            return Err(AutodiffError::InvalidArgument("group_norm eps must be positive".into()));
        }
        let spatial: usize = shape[2..].iter().product();
        let block = c / groups * spatial;
        let xs = self.value(x).data();
        let (mean, rstd) = block_stats(xs, block, eps);
        let (gs, bs) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![F::zero(); xs.len()];
        for (i, (o, &v)) in out.iter_mut().zip(xs).enumerate() {
            let blk = i / block;
            let ch = (i / spatial) % c;
            *o = (v - mean[blk]) * rstd[blk] * gs[ch] + bs[ch];
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::GroupNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                groups,
                mean,
                rstd,
            },
            &[x.0, gamma.0, beta.0],
        ))
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: F) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| shape_err("layer_norm", "rank-0 input"))?;
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(shape_err("layer_norm", format!("affine parameters must have shape [{d}]")));
        }
        if eps <= F::zero() {
            return Err(AutodiffError::InvalidArgument("layer_norm eps must be positive".into()));
        }
        let xs = self.value(x).data();
        let (mean, rstd) = block_stats(xs, d, eps);
        let (gs, bs) = (self.value(gamma).data(), self.value(beta).data());
        let out: Vec<F> = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean[i / d]) * rstd[i / d] * gs[i % d] + bs[i % d])
            .collect();
        let out = Tensor::new(shape, out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean,
                rstd,
            },
            &[x.0, gamma.0, beta.0],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn group_norm_backward<F: Scalar>(
    g: &Graph<F>,
    x: usize,
    gamma: usize,
    beta: usize,
    groups: usize,
    mean: &[F],
    rstd: &[F],
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let xv = &g.nodes[x].value;
    let c = xv.shape()[1];
    let spatial: usize = xv.shape()[2..].iter().product();
    let block = c / groups * spatial;
    let xs = xv.data();
    let gs = g.nodes[gamma].value.data();
    let xhat: Vec<F> = xs
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - mean[i / block]) * rstd[i / block])
        .collect();

    if let Some(db) = g.adj_slot(adj, beta) {
        for (i, &gi) in grad.iter().enumerate() {
            db[(i / spatial) % c] += gi;
        }
    }
    if let Some(dg) = g.adj_slot(adj, gamma) {
        for (i, (&gi, &xh)) in grad.iter().zip(&xhat).enumerate() {
            dg[(i / spatial) % c] += gi * xh;
        }
    }
    if let Some(dx) = g.adj_slot(adj, x) {
        let dxhat: Vec<F> = grad
            .iter()
            .enumerate()
            .map(|(i, &gi)| gi * gs[(i / spatial) % c])
            .collect();
        for (blk, r) in rstd.iter().enumerate() {
            let range = blk * block..(blk + 1) * block;
            block_input_grad(&xhat[range.clone()], &dxhat[range.clone()], *r, &mut dx[range]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn layer_norm_backward<F: Scalar>(
    g: &Graph<F>,
    x: usize,
    gamma: usize,
    beta: usize,
    mean: &[F],
    rstd: &[F],
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let xv = &g.nodes[x].value;
    let d = *xv.shape().last().expect("validated in forward");
    let xs = xv.data();
    let gs = g.nodes[gamma].value.data();
    let xhat: Vec<F> = xs
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - mean[i / d]) * rstd[i / d])
        .collect();
    if let Some(db) = g.adj_slot(adj, beta) {
        for row in grad.chunks(d) {
            super::kernels::add_into(db, row);
        }
    }
    if let Some(dg) = g.adj_slot(adj, gamma) {
        for (i, (&gi, &xh)) in grad.iter().zip(&xhat).enumerate() {
            dg[i % d] += gi * xh;
        }
    }
    if let Some(dx) = g.adj_slot(adj, x) {
        let dxhat: Vec<F> = grad.iter().enumerate().map(|(i, &gi)| gi * gs[i % d]).collect();
        for (row, r) in rstd.iter().enumerate() {
            let range = row * d..(row + 1) * d;
            block_input_grad(&xhat[range.clone()], &dxhat[range.clone()], *r, &mut dx[range]);
        }
    }
}
