use super::graph::{Graph, Op, Var};
use super::tensor::Tensor;
use super::{shape_err, AutodiffError};
use crate::scalar::Scalar;

impl<F: Scalar> Graph<F> {
    fn map_unary(&mut self, x: Var, op: Op<F>, f: impl Fn(F) -> F) -> Var {
        let src = &self.nodes[x.0].value;
        let out = Tensor::from_fn(src.shape(), |i| f(src.data()[i]));
        self.push(out, op, &[x.0])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_binary(&mut self, a: Var, b: Var, op: Op<F>, f: impl Fn(F, F) -> F) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out = Tensor::from_fn(va.shape(), |i| f(va.data()[i], vb.data()[i]));
        self.push(out, op, &[a.0, b.0])
    }

    /// `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        self.note_kinks(x);
        self.map_unary(x, Op::Relu { x: x.0 }, |v| if v > F::zero() { v } else { F::zero() })
    }

    /// Margin hinge `max(0, x)`, identical to [`Graph::relu`].
    pub fn hinge(&mut self, x: Var) -> Var {
        self.relu(x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.note_kinks(x);
        self.map_unary(x, Op::Abs { x: x.0 }, F::abs)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Sqrt { x: x.0 }, F::sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Square { x: x.0 }, |v| v * v)
    }

    pub fn scale(&mut self, x: Var, c: F) -> Var {
        self.map_unary(x, Op::Scale { x: x.0, c }, |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: F) -> Var {
        self.map_unary(x, Op::AddScalar { x: x.0 }, |v| v + c)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_binary(a, b, Op::Add { a: a.0, b: b.0 }, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_binary(a, b, Op::Sub { a: a.0, b: b.0 }, |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_binary(a, b, Op::Mul { a: a.0, b: b.0 }, |x, y| x * y))
    }

    /// `a + b` where `b` repeats along the leading axes of `a`.
    ///
    /// `b`'s shape, after dropping leading unit extents, must equal a suffix of `a`'s shape.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let first_real = sb.iter().position(|&d| d != 1).unwrap_or(sb.len());
        let core = &sb[first_real..];
        if core.len() > sa.len() || sa[sa.len() - core.len()..] != *core {
            return Err(shape_err("add_broadcast", format!("cannot broadcast {sb:?} onto {sa:?}")));
        }
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let nb = vb.numel();
        let out = Tensor::from_fn(va.shape(), |i| va.data()[i] + vb.data()[i % nb]);
        Ok(self.push(out, Op::AddBroadcast { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// `a - b` with the broadcasting rule of [`Graph::add_broadcast`].
    pub fn sub_broadcast(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let nb = self.scale(b, -F::one());
        self.add_broadcast(a, nb)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = super::kernels::sum(self.nodes[x.0].value.data());
        self.push(Tensor::scalar(s), Op::SumAll { x: x.0 }, &[x.0])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let s = super::kernels::sum(v.data()) / F::lit(v.numel() as f64);
        self.push(Tensor::scalar(s), Op::MeanAll { x: x.0 }, &[x.0])
    }

    /// Sum over the last axis: `[.., D] -> [..]`.
    pub fn sum_last_dim(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let d = *v.shape().last().unwrap_or(&1);
        let out_shape = &v.shape()[..v.rank().saturating_sub(1)];
        let data: Vec<F> = v.data().chunks(d).map(super::kernels::sum).collect();
        let out = Tensor::new(out_shape.to_vec(), data).expect("row count matches");
        self.push(out, Op::SumLastDim { x: x.0 }, &[x.0])
    }

    /// Sum of same-shaped terms, folded left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var, AutodiffError> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| AutodiffError::InvalidArgument("add_all of no terms".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }
}

pub(super) fn backward<F: Scalar>(
    g: &Graph<F>,
    id: usize,
    op: &Op<F>,
    grad: &[F],
    adj: &mut [Option<Vec<F>>],
) {
    let val = |i: usize| g.nodes[i].value.data();
    match *op {
        Op::Relu { x } => {
            let xs = val(x);
            if let Some(dx) = g.adj_slot(adj, x) {
                for ((d, &gi), &xi) in dx.iter_mut().zip(grad).zip(xs) {
                    if xi > F::zero() {
                        *d += gi;
                    }
                }
            }
        }
        Op::Abs { x } => {
            let xs = val(x);
            if let Some(dx) = g.adj_slot(adj, x) {
                for ((d, &gi), &xi) in dx.iter_mut().zip(grad).zip(xs) {
                    if xi > F::zero() {
                        *d += gi;
                    } else if xi < F::zero() {
                        *d -= gi;
                    }
                }
            }
        }
        Op::Sqrt { x } => {
            let ys = val(id);
            if let Some(dx) = g.adj_slot(adj, x) {
                let half = F::lit(0.5);
                for ((d, &gi), &yi) in dx.iter_mut().zip(grad).zip(ys) {
                    if yi > F::zero() {
                        *d += gi * half / yi;
                    }
                }
            }
        }
        Op::Square { x } => {
            let xs = val(x);
            if let Some(dx) = g.adj_slot(adj, x) {
                let two = F::lit(2.0);
                for ((d, &gi), &xi) in dx.iter_mut().zip(grad).zip(xs) {
                    *d += two * xi * gi;
                }
            }
        }
        Op::Scale { x, c } => {
            if let Some(dx) = g.adj_slot(adj, x) {
                super::kernels::axpy(c, grad, dx);
            }
        }
        Op::AddScalar { x } => {
            if let Some(dx) = g.adj_slot(adj, x) {
                super::kernels::add_into(dx, grad);
            }
        }
        Op::Add { a, b } => {
            if let Some(da) = g.adj_slot(adj, a) {
                super::kernels::add_into(da, grad);
            }
            if let Some(db) = g.adj_slot(adj, b) {
                super::kernels::add_into(db, grad);
            }
        }
        Op::Sub { a, b } => {
            if let Some(da) = g.adj_slot(adj, a) {
                super::kernels::add_into(da, grad);
            }
            if let Some(db) = g.adj_slot(adj, b) {
                super::kernels::axpy(-F::one(), grad, db);
            }
        }
        Op::Mul { a, b } => {
            let (va, vb) = (val(a), val(b));
            if let Some(da) = g.adj_slot(adj, a) {
                for ((d, &gi), &y) in da.iter_mut().zip(grad).zip(vb) {
                    *d += gi * y;
                }
            }
            if let Some(db) = g.adj_slot(adj, b) {
                for ((d, &gi), &x) in db.iter_mut().zip(grad).zip(va) {
                    *d += gi * x;
                }
            }
        }
        Op::AddBroadcast { a, b } => {
            if let Some(da) = g.adj_slot(adj, a) {
                super::kernels::add_into(da, grad);
            }
            if let Some(db) = g.adj_slot(adj, b) {
                let nb = db.len();
                for chunk in grad.chunks(nb) {
                    super::kernels::add_into(db, chunk);
                }
            }
        }
        Op::SumAll { x } => {
            if let Some(dx) = g.adj_slot(adj, x) {
                let gi = grad[0];
                dx.iter_mut().for_each(|d| *d += gi);
            }
        }
        Op::MeanAll { x } => {
            if let Some(dx) = g.adj_slot(adj, x) {
                let gi = grad[0] / F::lit(dx.len() as f64);
                dx.iter_mut().for_each(|d| *d += gi);
            }
        }
        Op::SumLastDim { x } => {
            if let Some(dx) = g.adj_slot(adj, x) {
                let d = dx.len() / grad.len();
                for (row, &gi) in dx.chunks_mut(d).zip(grad) {
                    row.iter_mut().for_each(|v| *v += gi);
                }
            }
        }
        _ => unreachable!("non-elementwise op routed to elementwise backward"),
    }
}
