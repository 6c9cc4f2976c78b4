use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub origin: (usize, usize),
    pub anchor_inside: bool,
    pub d_plus: f64,
    pub d_minus: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    /// 1 is the deepest decoder scale.
    pub scale: usize,
    pub margin_patches: usize,
    pub total_patches: usize,
    pub loss: f64,
    pub patches: Vec<PatchRecord>,
}

impl ScaleRecord {
    pub fn empty(scale: usize) -> Self {
        Self {
            scale,
            margin_patches: 0,
            total_patches: 0,
            loss: 0.0,
            patches: Vec::new(),
        }
    }

    /// Mean of `d- - d+` over the margin patches, `None` without patches.
    pub fn mean_separation(&self) -> Option<f64> {
        if self.patches.is_empty() {
            return None;
        }
        let n = self.patches.len() as f64;
        Some(self.patches.iter().map(|p| p.d_minus - p.d_plus).sum::<f64>() / n)
    }
}

/// Per-patch distances and losses for every scale, plus the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletDiagnostics {
    pub scales: Vec<ScaleRecord>,
    pub total: f64,
}

#[derive(Serialize)]
struct Row {
    scale: usize,
    origin_row: usize,
    origin_col: usize,
    anchor_inside: u8,
    d_plus: f64,
    d_minus: f64,
    loss: f64,
}

impl TripletDiagnostics {
    pub fn from_scales(scales: Vec<ScaleRecord>) -> Self {
        let total = scales.iter().map(|s| s.loss).sum();
        Self { scales, total }
    }

    pub fn mean_separation(&self) -> Option<f64> {
        let all: Vec<f64> = self
            .scales
            .iter()
            .flat_map(|s| s.patches.iter().map(|p| p.d_minus - p.d_plus))
            .collect();
        (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64)
    }

    /// One row per patch per scale.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for s in &self.scales {
            for p in &s.patches {
                w.serialize(Row {
                    scale: s.scale,
                    origin_row: p.origin.0,
                    origin_col: p.origin.1,
                    anchor_inside: p.anchor_inside as u8,
                    d_plus: p.d_plus,
                    d_minus: p.d_minus,
                    loss: p.loss,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
