//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as an
//! append-only node list. [`Graph::backward`] walks that list once in
//! reverse, so a node's inputs always precede it and each node is visited
//! exactly once. Gradients land on leaves created with `requires_grad`
//! and accumulate additively across repeated `backward` calls.
//!
//! ```
//! use tctrans::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
//! let sq = g.square(x);
//! let loss = g.sum_all(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

mod attention;
mod conv;
mod elementwise;
pub mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod linalg;
mod norm;
mod shape;
mod tensor;

pub use attention::attention_probabilities;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, LossBuilder};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    AutodiffError::Shape {
        op,
        detail: detail.into(),
    }
}
