use super::graph::{Graph, Op, Var};
use super::kernels::add_into;
use super::tensor::{numel, Tensor};
use super::{shape_err, AutodiffError};
use crate::scalar::Scalar;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each output position of `permute(axes)`, the source offset in the input.
fn permute_sources(in_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let n = numel(&out_shape);
    let mut idx = vec![0usize; out_shape.len()];
    let mut src = Vec::with_capacity(n);
    for _ in 0..n {
        src.push(idx.iter().zip(axes).map(|(&i, &a)| i * in_strides[a]).sum());
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    src
}

impl<F: Scalar> Graph<F> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let out = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape { x: x.0 }, &[x.0]))
    }

    /// Reorder axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(shape_err("permute", format!("{axes:?} is not a permutation of {} axes", shape.len())));
        }
        let src = permute_sources(&shape, axes);
        let xs = self.value(x).data();
        let data = src.iter().map(|&s| xs[s]).collect();
        let out = Tensor::new(axes.iter().map(|&a| shape[a]).collect(), data)?;
        Ok(self.push(
            out,
            Op::Permute {
                x: x.0,
                axes: axes.to_vec(),
            },
            &[x.0],
        ))
    }

    /// Concatenate two `[B,C,H,W]` maps along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(shape_err("concat_channels", format!("{sa:?} and {sb:?} are not stackable")));
        }
        let plane = sa[2] * sa[3];
        let (ca, cb) = (sa[1], sb[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for bi in 0..sa[0] {
            data.extend_from_slice(&av[bi * ca * plane..(bi + 1) * ca * plane]);
            data.extend_from_slice(&bv[bi * cb * plane..(bi + 1) * cb * plane]);
        }
        let out = Tensor::new(vec![sa[0], ca + cb, sa[2], sa[3]], data)?;
        Ok(self.push(out, Op::ConcatChannels { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// Nearest-neighbour 2x upsampling of `[B,C,H,W]`.
    pub fn upsample2x_nearest(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(shape_err("upsample2x_nearest", format!("expected [B,C,H,W], got {s:?}")));
        }
        let (h, w) = (s[2], s[3]);
        let xs = self.value(x).data();
        let mut data = Vec::with_capacity(xs.len() * 4);
        for plane in xs.chunks(h * w) {
            for row in plane.chunks(w) {
                for _ in 0..2 {
                    for &v in row {
                        data.push(v);
                        data.push(v);
                    }
                }
            }
        }
        let out = Tensor::new(vec![s[0], s[1], 2 * h, 2 * w], data)?;
        Ok(self.push(out, Op::Upsample2x { x: x.0 }, &[x.0]))
    }

    /// Feature vectors at the given flat pixel offsets of a `[1,C,h,w]` map, as `[n, C]`.
    pub fn gather_pixels(&mut self, x: Var, pixels: &[usize]) -> Result<Var, AutodiffError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[0] != 1 {
            return Err(shape_err("gather_pixels", format!("expected [1,C,h,w], got {s:?}")));
        }
        let (c, hw) = (s[1], s[2] * s[3]);
        if pixels.is_empty() {
            return Err(AutodiffError::InvalidArgument("gather_pixels of no pixels".into()));
        }
        if let Some(&p) = pixels.iter().find(|&&p| p >= hw) {
            return Err(shape_err("gather_pixels", format!("pixel {p} outside {}x{}", s[2], s[3])));
        }
        let xs = self.value(x).data();
        let mut data = Vec::with_capacity(pixels.len() * c);
        for &p in pixels {
            data.extend((0..c).map(|ch| xs[ch * hw + p]));
        }
        let out = Tensor::new(vec![pixels.len(), c], data)?;
        Ok(self.push(
            out,
            Op::Gather {
                x: x.0,
                pixels: pixels.to_vec(),
            },
            &[x.0],
        ))
    }
}

impl<F: Scalar> Graph<F> {
    /// Item `index` of the leading axis, keeping a unit leading extent.
    pub fn select_batch(&mut self, x: Var, index: usize) -> Result<Var, AutodiffError> {
        let s = self.shape(x).to_vec();
        if s.is_empty() || index >= s[0] {
            return Err(shape_err("select_batch", format!("index {index} outside {s:?}")));
        }
        let per = numel(&s[1..]);
        let data = self.value(x).data()[index * per..(index + 1) * per].to_vec();
        let mut shape = s;
        shape[0] = 1;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::SelectBatch { x: x.0, index }, &[x.0]))
    }

    /// Concatenate along the leading axis; trailing extents must agree.
    pub fn stack_batch(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        let first = xs
            .first()
            .ok_or_else(|| AutodiffError::InvalidArgument("stack_batch of nothing".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &v in xs {
            let s = self.shape(v);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(shape_err("stack_batch", format!("{s:?} does not stack with [_, {tail:?}]")));
            }
            lead += s[0];
            data.extend_from_slice(self.value(v).data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let out = Tensor::new(shape, data)?;
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.push(out, Op::StackBatch { xs: ids.clone() }, &ids))
    }
}

pub(super) fn select_batch_backward<F: Scalar>(
    g: &Graph<F>,
    x: usize,
    index: usize,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    if let Some(dx) = g.adj_slot(adj, x) {
        let per = grad.len();
        add_into(&mut dx[index * per..(index + 1) * per], grad);
    }
}

pub(super) fn stack_batch_backward<F: Scalar>(g: &Graph<F>, xs: &[usize], grad: &[F], adj: &mut [Option<Vec<F>>]) {
    let mut off = 0;
    for &x in xs {
        let n = g.nodes[x].value.numel();
        if let Some(dx) = g.adj_slot(adj, x) {
            add_into(dx, &grad[off..off + n]);
        }
        off += n;
    }
}

pub(super) fn reshape_backward<F: Scalar>(g: &Graph<F>, x: usize, grad: &[F], adj: &mut [Option<Vec<F>>]) {
    if let Some(dx) = g.adj_slot(adj, x) {
        add_into(dx, grad);
    }
}

pub(super) fn permute_backward<F: Scalar>(
    g: &Graph<F>,
    x: usize,
    axes: &[usize],
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let src = permute_sources(g.nodes[x].value.shape(), axes);
    if let Some(dx) = g.adj_slot(adj, x) {
        for (&s, &gv) in src.iter().zip(grad) {
            dx[s] += gv;
        }
    }
}

pub(super) fn concat_backward<F: Scalar>(
    g: &Graph<F>,
    a: usize,
    b: usize,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let sa = g.nodes[a].value.shape();
    let cb = g.nodes[b].value.shape()[1];
    let (batch, ca, plane) = (sa[0], sa[1], sa[2] * sa[3]);
    let per = (ca + cb) * plane;
    if let Some(da) = g.adj_slot(adj, a) {
        for bi in 0..batch {
            add_into(&mut da[bi * ca * plane..(bi + 1) * ca * plane], &grad[bi * per..bi * per + ca * plane]);
        }
    }
    if let Some(db) = g.adj_slot(adj, b) {
        for bi in 0..batch {
            add_into(
                &mut db[bi * cb * plane..(bi + 1) * cb * plane],
                &grad[bi * per + ca * plane..(bi + 1) * per],
            );
        }
    }
}

pub(super) fn upsample_backward<F: Scalar>(g: &Graph<F>, x: usize, grad: &[F], adj: &mut [Option<Vec<F>>]) {
    let s = g.nodes[x].value.shape();
    let (h, w) = (s[2], s[3]);
    if let Some(dx) = g.adj_slot(adj, x) {
        for (p, dplane) in dx.chunks_mut(h * w).enumerate() {
            let gplane = &grad[p * 4 * h * w..(p + 1) * 4 * h * w];
            for y in 0..h {
                for xx in 0..w {
                    let r0 = 2 * y * 2 * w + 2 * xx;
                    let r1 = r0 + 2 * w;
                    dplane[y * w + xx] += (gplane[r0] + gplane[r0 + 1]) + (gplane[r1] + gplane[r1 + 1]);
                }
            }
        }
    }
}

pub(super) fn gather_backward<F: Scalar>(
    g: &Graph<F>,
    x: usize,
    pixels: &[usize],
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let s = g.nodes[x].value.shape();
    let (c, hw) = (s[1], s[2] * s[3]);
    if let Some(dx) = g.adj_slot(adj, x) {
        for (row, &p) in pixels.iter().enumerate() {
            for ch in 0..c {
                dx[ch * hw + p] += grad[row * c + ch];
            }
        }
    }
}
