//! Transformer-embedded encoder-decoder for radiotherapy dose prediction,
//! trained with an L1 dose loss plus a PTV-guided triplet constraint that
//! is applied at every decoder scale.
//!
//! The crate is self-contained: [`autodiff`] is the differentiation engine,
//! [`model`] the network, [`triplet`] the boundary-patch constraint,
//! [`training`] the objective and optimizer, [`phantom`] a synthetic
//! phantom generator with its binary format, and [`dosimetry`] the
//! clinical evaluation metrics. [`cli`] wires them into commands and
//! [`gradcheck_suite`] collects the finite-difference checks.

pub mod autodiff;
pub mod cli;
pub mod dosimetry;
pub mod error;
pub mod gradcheck_suite;
pub mod model;
pub mod phantom;
pub mod plane;
pub mod scalar;
pub mod training;
pub mod triplet;

pub use error::Error;
pub use scalar::{Precision, Scalar};
