use super::diagnostics::{PatchRecord, ScaleRecord};
use super::patches::{margin_patches, MarginPatch, MarginPatchSet};
use super::TripletError;
use crate::autodiff::{Graph, Tensor, Var};
use crate::plane::Mask;
use crate::scalar::Scalar;

/// Added under the square root so identical feature vectors get a zero subgradient.
pub const SQRT_EPS: f64 = 1e-12;

/// Divisor applied to the per-scale sum of patch losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by `S * S`.
    #[default]
    PatchArea,
    /// Divide by the number of margin patches `l`.
    MarginCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletConfig {
    pub patch_size: usize,
    pub margin: f64,
    pub normalization: Normalization,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            patch_size: 5,
            margin: 0.3,
            normalization: Normalization::PatchArea,
        }
    }
}

/// Plain-value `(d+, d-)` for one patch of a `[1,C,h,w]` feature map.
///
/// An empty positive set (the anchor is alone on its side) gives `d+ = 0`.
pub fn anchor_distances<F: Scalar>(f: &Tensor<F>, width: usize, patch: &MarginPatch) -> (f64, f64) {
    let s = f.shape();
    let (c, hw) = (s[1], s[2] * s[3]);
    let data = f.data();
    let a = patch.anchor_offset(width);
    let dist = |j: usize| -> f64 {
        (0..c)
            .map(|ch| {
                let d = data[ch * hw + a].as_f64() - data[ch * hw + j].as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let mean = |set: &[usize]| {
        if set.is_empty() {
            0.0
        } else {
            set.iter().map(|&j| dist(j)).sum::<f64>() / set.len() as f64
        }
    };
    (mean(&patch.positives), mean(&patch.negatives))
}

/// `max(0, d+ + m - d-)`.
pub fn inner_patch_loss(d_plus: f64, d_minus: f64, margin: f64) -> f64 {
    ((d_plus - d_minus) + margin).max(0.0)
}

/// One scale's loss node and its per-patch diagnostics.
#[derive(Debug, Clone)]
pub struct ScaleTerm {
    pub loss: Var,
    pub patches: MarginPatchSet,
    pub record: ScaleRecord,
}

#[derive(Debug, Clone)]
pub struct MultiScaleTerm {
    pub loss: Var,
    pub scales: Vec<ScaleTerm>,
}

impl MultiScaleTerm {
    pub fn value<F: Scalar>(&self, g: &Graph<F>) -> f64 {
        g.value(self.loss).item().as_f64()
    }
}

/// Mean eps-guarded Euclidean distance from the anchor row to each pixel of `set`.
fn mean_distance<F: Scalar>(g: &mut Graph<F>, f: Var, anchor: Var, set: &[usize]) -> Result<Var, TripletError> {
    if set.is_empty() {
        return Ok(g.input(Tensor::scalar(F::zero())));
    }
    let rows = g.gather_pixels(f, set)?;
    let diff = g.sub_broadcast(rows, anchor)?;
    let sq = g.square(diff);
    let ss = g.sum_last_dim(sq);
    let guarded = g.add_scalar(ss, F::lit(SQRT_EPS));
    let d = g.sqrt(guarded);
    Ok(g.mean_all(d))
}

/// Triplet constraint on one feature map, `sum_i L_i / S^2` (or `/ l`).
///
/// `scale` only labels the diagnostics.
pub fn triplet_constraint_loss<F: Scalar>(
    g: &mut Graph<F>,
    f: Var,
    mask: &Mask,
    config: &TripletConfig,
    scale: usize,
) -> Result<ScaleTerm, TripletError> {
    if config.margin < 0.0 || config.margin.is_nan() {
        return Err(TripletError::NegativeMargin(config.margin));
    }
    let shape = g.shape(f).to_vec();
    let (h, w) = mask.dims();
    if shape.len() != 4 || shape[0] != 1 || shape[2] != h || shape[3] != w {
        return Err(TripletError::Misaligned {
            feature: shape,
            height: h,
            width: w,
        });
    }
    let patches = margin_patches(mask, config.patch_size)?;
    let mut record = ScaleRecord {
        scale,
        margin_patches: patches.len(),
        total_patches: patches.total_patches,
        loss: 0.0,
        patches: Vec::with_capacity(patches.len()),
    };
    if patches.is_empty() {
        let zero = g.input(Tensor::scalar(F::zero()));
        return Ok(ScaleTerm {
            loss: zero,
            patches,
            record,
        });
    }
    let margin = F::lit(config.margin);
    let mut terms = Vec::with_capacity(patches.len());
    for p in &patches.patches {
        let anchor = g.gather_pixels(f, &[p.anchor_offset(w)])?;
        let d_plus = mean_distance(g, f, anchor, &p.positives)?;
        let d_minus = mean_distance(g, f, anchor, &p.negatives)?;
        let gap = g.sub(d_plus, d_minus)?;
        let shifted = g.add_scalar(gap, margin);
        let li = g.hinge(shifted);
        record.patches.push(PatchRecord {
            origin: p.origin,
            anchor_inside: p.anchor_inside,
            d_plus: g.value(d_plus).item().as_f64(),
            d_minus: g.value(d_minus).item().as_f64(),
            loss: g.value(li).item().as_f64(),
        });
        terms.push(li);
    }
    let total = g.add_all(&terms)?;
    let divisor = match config.normalization {
        Normalization::PatchArea => (config.patch_size * config.patch_size) as f64,
        Normalization::MarginCount => patches.len() as f64,
    };
    let loss = g.scale(total, F::one() / F::lit(divisor));
    record.loss = g.value(loss).item().as_f64();
    Ok(ScaleTerm { loss, patches, record })
}

/// Sum of per-scale triplet losses over decoder features ordered deepest first.
///
/// Feature `r` (1-based) of `R` must be the full mask size divided by
/// `2^(R-r)`; the mask is subsampled to match. A scale smaller than the
/// patch size has no whole tile and contributes zero.
pub fn multiscale_triplet_loss<F: Scalar>(
    g: &mut Graph<F>,
    features: &[Var],
    mask: &Mask,
    config: &TripletConfig,
) -> Result<MultiScaleTerm, TripletError> {
    let r_total = features.len();
    let mut scales = Vec::with_capacity(r_total);
    for (i, &f) in features.iter().enumerate() {
        let factor = 1usize << (r_total - 1 - i);
        let (h, w) = mask.dims();
        let shape = g.shape(f).to_vec();
        if h % factor != 0 || w % factor != 0 || shape.len() != 4 || shape[2] * factor != h || shape[3] * factor != w {
            return Err(TripletError::Misaligned {
                feature: shape,
                height: h / factor,
                width: w / factor,
            });
        }
        let scaled = mask.downsample_nearest(factor);
        if config.patch_size > scaled.height().min(scaled.width()) {
            let zero = g.input(Tensor::scalar(F::zero()));
            scales.push(ScaleTerm {
                loss: zero,
                patches: MarginPatchSet {
                    patch_size: config.patch_size,
                    height: scaled.height(),
                    width: scaled.width(),
                    total_patches: 0,
                    patches: Vec::new(),
                },
                record: ScaleRecord::empty(i + 1),
            });
            continue;
        }
        scales.push(triplet_constraint_loss(g, f, &scaled, config, i + 1)?);
    }
    let losses: Vec<Var> = scales.iter().map(|s| s.loss).collect();
    let loss = if losses.is_empty() {
        g.input(Tensor::scalar(F::zero()))
    } else {
        g.add_all(&losses)?
    };
    Ok(MultiScaleTerm { loss, scales })
}
