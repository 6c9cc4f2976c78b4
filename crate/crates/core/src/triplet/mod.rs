//! PTV-guided triplet constraint and its multi-scale aggregation.
//!
//! The PTV mask is tiled into `S x S` patches; every tile that straddles the
//! PTV boundary contributes one triplet whose anchor is the tile centre.
//! Positives are the tile pixels on the anchor's side of the boundary,
//! negatives the pixels on the other side. Per tile,
//!
//! ```text
//! d+ = mean_{j in positives} |f_anchor - f_j|_2
//! d- = mean_{j in negatives} |f_anchor - f_j|_2
//! L_i = max(0, d+ + m - d-)
//! ```
//!
//! and a scale contributes `sum_i L_i / S^2`. The multi-scale loss sums that
//! over every decoder scale, with the mask subsampled to each resolution.

mod diagnostics;
mod loss;
mod patches;

pub use diagnostics::{PatchRecord, ScaleRecord, TripletDiagnostics};
pub use loss::{
    anchor_distances, inner_patch_loss, multiscale_triplet_loss, triplet_constraint_loss, MultiScaleTerm,
    Normalization, ScaleTerm, TripletConfig, SQRT_EPS,
};
pub use patches::{margin_patches, MarginPatch, MarginPatchSet};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum TripletError {
    #[error("patch size must be odd so the anchor is a unique centre pixel, got {0}")]
    EvenPatchSize(usize),
    #[error("patch size {patch_size} exceeds the {height}x{width} plane")]
    PatchTooLarge {
        patch_size: usize,
        height: usize,
        width: usize,
    },
    #[error("feature map {feature:?} does not align with a {height}x{width} mask")]
    Misaligned {
        feature: Vec<usize>,
        height: usize,
        width: usize,
    },
    #[error("margin must be non-negative, got {0}")]
    NegativeMargin(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
