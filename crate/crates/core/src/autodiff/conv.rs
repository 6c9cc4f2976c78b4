use super::graph::{Graph, Op, Var};
use super::kernels::{add_into, axpy, dot};
use super::tensor::Tensor;
use super::{shape_err, AutodiffError};
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
struct Geometry {
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    /// Output columns `ox` whose input column `ox*stride + kx - pad` lies inside the row.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = if kx >= self.pad {
            0
        } else {
            (self.pad - kx).div_ceil(self.stride)
        };
        let last = self.w - 1 + self.pad;
        let hi = if last < kx {
            0
        } else {
            ((last - kx) / self.stride + 1).min(self.wo)
        };
        (lo, hi.max(lo))
    }

    #[inline]
    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        (iy < self.h).then_some(iy)
    }
}

fn geometry(
    x: &[usize],
    w: &[usize],
    b: &[usize],
    stride: usize,
    pad: usize,
) -> Result<Geometry, AutodiffError> {
    if x.len() != 4 || w.len() != 4 {
        return Err(shape_err(
            "conv2d",
            format!("expected input [B,Cin,H,W] and weight [Cout,Cin,k,k], got {x:?} and {w:?}"),
        ));
    }
    let (batch, cin, h, wd) = (x[0], x[1], x[2], x[3]);
    let (cout, wcin, k, k2) = (w[0], w[1], w[2], w[3]);
    if wcin != cin {
        return Err(shape_err(
            "conv2d",
            format!("input has Cin={cin} channels but weight expects {wcin} (input {x:?}, weight {w:?})"),
        ));
    }
    if k != k2 || k % 2 == 0 {
        return Err(shape_err("conv2d", format!("kernel must be square and odd-sized, got {k}x{k2}")));
    }
    if b != [cout] {
        return Err(shape_err("conv2d", format!("bias shape {b:?} does not match Cout={cout}")));
    }
    if stride == 0 {
        return Err(AutodiffError::InvalidArgument("conv2d stride must be >= 1".into()));
    }
    if h + 2 * pad < k || wd + 2 * pad < k {
        return Err(shape_err("conv2d", format!("padded input {h}x{wd} (pad {pad}) smaller than kernel {k}")));
    }
    Ok(Geometry {
        batch,
        cin,
        cout,
        h,
        w: wd,
        k,
        stride,
        pad,
        ho: (h + 2 * pad - k) / stride + 1,
        wo: (wd + 2 * pad - k) / stride + 1,
    })
}

impl<F: Scalar> Graph<F> {
    /// 2-D cross-correlation over `[B,Cin,H,W]` with a `[Cout,Cin,k,k]` kernel.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var, AutodiffError> {
        let geo = geometry(self.shape(x), self.shape(weight), self.shape(bias), stride, pad)?;
        let (xs, ws, bs) = (
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let out = forward(&geo, xs, ws, bs);
        let out = Tensor::new(vec![geo.batch, geo.cout, geo.ho, geo.wo], out)?;
        Ok(self.push(
            out,
            Op::Conv2d {
                x: x.0,
                w: weight.0,
                b: bias.0,
                stride,
                pad,
            },
            &[x.0, weight.0, bias.0],
        ))
    }
}

/// Unfold one batch item into rows `(ci, ky, kx)` of length `ho*wo`; padding reads as zero.
fn im2col<F: Scalar>(geo: &Geometry, input: &[F], col: &mut [F]) {
    let Geometry {
        cin,
        h,
        w,
        k,
        stride,
        pad,
        ho,
        wo,
        ..
    } = *geo;
    col.iter_mut().for_each(|v| *v = F::zero());
    for ci in 0..cin {
        let plane = &input[ci * h * w..][..h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * ho * wo..][..ho * wo];
                let (lo, hi) = geo.col_range(kx);
                if lo >= hi {
                    continue;
                }
                let ix0 = lo * stride + kx - pad;
                for oy in 0..ho {
                    let Some(iy) = geo.in_row(oy, ky) else { continue };
                    let irow = &plane[iy * w..(iy + 1) * w];
                    let orow = &mut row[oy * wo + lo..oy * wo + hi];
                    if stride == 1 {
                        orow.copy_from_slice(&irow[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (j, o) in orow.iter_mut().enumerate() {
                            *o = irow[ix0 + j * stride];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the transpose of [`im2col`] into one batch item's input gradient.
fn col2im_add<F: Scalar>(geo: &Geometry, col: &[F], dinput: &mut [F]) {
    let Geometry {
        cin,
        h,
        w,
        k,
        stride,
        pad,
        ho,
        wo,
        ..
    } = *geo;
    for ci in 0..cin {
        let plane = &mut dinput[ci * h * w..][..h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * ho * wo..][..ho * wo];
                let (lo, hi) = geo.col_range(kx);
                if lo >= hi {
                    continue;
                }
                let ix0 = lo * stride + kx - pad;
                for oy in 0..ho {
                    let Some(iy) = geo.in_row(oy, ky) else { continue };
                    let drow = &mut plane[iy * w..(iy + 1) * w];
                    let grow = &row[oy * wo + lo..oy * wo + hi];
                    if stride == 1 {
                        add_into(&mut drow[ix0..ix0 + (hi - lo)], grow);
                    } else {
                        for (j, gv) in grow.iter().enumerate() {
                            drow[ix0 + j * stride] += *gv;
                        }
                    }
                }
            }
        }
    }
}

fn forward<F: Scalar>(geo: &Geometry, xs: &[F], ws: &[F], bs: &[F]) -> Vec<F> {
    let Geometry {
        batch,
        cin,
        cout,
        h,
        w,
        k,
        ho,
        wo,
        ..
    } = *geo;
    let (rows, n) = (cin * k * k, ho * wo);
    let mut out = vec![F::zero(); batch * cout * n];
    let mut col = vec![F::zero(); rows * n];
    for b in 0..batch {
        im2col(geo, &xs[b * cin * h * w..][..cin * h * w], &mut col);
        for co in 0..cout {
            let plane = &mut out[(b * cout + co) * n..][..n];
            plane.iter_mut().for_each(|v| *v = bs[co]);
            let wrow = &ws[co * rows..][..rows];
            for (r, &wv) in wrow.iter().enumerate() {
                axpy(wv, &col[r * n..][..n], plane);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward<F: Scalar>(
    g: &Graph<F>,
    x: usize,
    w: usize,
    b: usize,
    stride: usize,
    pad: usize,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let (xv, wv, bv) = (&g.nodes[x].value, &g.nodes[w].value, &g.nodes[b].value);
    let geo = geometry(xv.shape(), wv.shape(), bv.shape(), stride, pad).expect("validated in forward");
    let Geometry {
        batch,
        cin,
        cout,
        h,
        w: wd,
        k,
        ho,
        wo,
        ..
    } = geo;
    let (xs, ws) = (xv.data(), wv.data());
    let (rows, n) = (cin * k * k, ho * wo);

    if let Some(db) = g.adj_slot(adj, b) {
        for bi in 0..batch {
            for co in 0..cout {
                db[co] += super::kernels::sum(&grad[(bi * cout + co) * n..][..n]);
            }
        }
    }

    let mut col = vec![F::zero(); rows * n];
    if let Some(dw) = g.adj_slot(adj, w) {
        for bi in 0..batch {
            im2col(&geo, &xs[bi * cin * h * wd..][..cin * h * wd], &mut col);
            for co in 0..cout {
                let gplane = &grad[(bi * cout + co) * n..][..n];
                let drow = &mut dw[co * rows..][..rows];
                for (r, d) in drow.iter_mut().enumerate() {
                    *d += dot(gplane, &col[r * n..][..n]);
                }
            }
        }
    }

    if let Some(dx) = g.adj_slot(adj, x) {
        for bi in 0..batch {
            col.iter_mut().for_each(|v| *v = F::zero());
            for co in 0..cout {
                let gplane = &grad[(bi * cout + co) * n..][..n];
                let wrow = &ws[co * rows..][..rows];
                for (r, &wgt) in wrow.iter().enumerate() {
                    axpy(wgt, gplane, &mut col[r * n..][..n]);
                }
            }
            col2im_add(&geo, &col, &mut dx[bi * cin * h * wd..][..cin * h * wd]);
        }
    }
}
