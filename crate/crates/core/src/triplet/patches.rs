use super::TripletError;
use crate::plane::Mask;

/// One boundary-straddling `S x S` tile.
///
/// Pixel sets hold flat row-major offsets into the full mask grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginPatch {
    pub origin: (usize, usize),
    pub anchor: (usize, usize),
    pub anchor_inside: bool,
    /// Same side of the PTV boundary as the anchor, anchor excluded.
    pub positives: Vec<usize>,
    /// Opposite side of the boundary.
    pub negatives: Vec<usize>,
}

impl MarginPatch {
    pub fn anchor_offset(&self, width: usize) -> usize {
        self.anchor.0 * width + self.anchor.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginPatchSet {
    pub patch_size: usize,
    pub height: usize,
    pub width: usize,
    /// Number of whole tiles, `floor(h/S) * floor(w/S)`.
    pub total_patches: usize,
    pub patches: Vec<MarginPatch>,
}

impl MarginPatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Tile `mask` from (0,0) into non-overlapping `S x S` patches, dropping
/// partial tiles, and keep those containing both PTV and non-PTV pixels.
pub fn margin_patches(mask: &Mask, patch_size: usize) -> Result<MarginPatchSet, TripletError> {
    let (h, w) = mask.dims();
    if patch_size == 0 || patch_size % 2 == 0 {
        return Err(TripletError::EvenPatchSize(patch_size));
    }
    if patch_size > h.min(w) {
        return Err(TripletError::PatchTooLarge {
            patch_size,
            height: h,
            width: w,
        });
    }
    let s = patch_size;
    let (rows, cols) = (h / s, w / s);
    let mut patches = Vec::new();
    for tr in 0..rows {
        for tc in 0..cols {
            let origin = (tr * s, tc * s);
            let anchor = (origin.0 + s / 2, origin.1 + s / 2);
            let anchor_inside = mask.get(anchor.0, anchor.1);
            let mut positives = Vec::new();
            let mut negatives = Vec::new();
            for r in origin.0..origin.0 + s {
                for c in origin.1..origin.1 + s {
                    if (r, c) == anchor {
                        continue;
                    }
                    if mask.get(r, c) == anchor_inside {
                        positives.push(r * w + c);
                    } else {
                        negatives.push(r * w + c);
                    }
                }
            }
            // the anchor itself supplies one side, so any opposite pixel makes a margin patch
            if !negatives.is_empty() {
                patches.push(MarginPatch {
                    origin,
                    anchor,
                    anchor_inside,
                    positives,
                    negatives,
                });
            }
        }
    }
    Ok(MarginPatchSet {
        patch_size: s,
        height: h,
        width: w,
        total_patches: rows * cols,
        patches,
    })
}
